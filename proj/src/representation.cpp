#include "babelkit/representation.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "babelkit/errors.hpp"
#include "babelkit/ops.hpp"

namespace babel {

std::vector<std::vector<double>> collect_reps(const LoadedModel& lm,
                                              const std::vector<std::vector<TokenId>>& prompts,
                                              const ChatTemplate& tmpl,
                                              std::vector<size_t>* skipped) {
    std::vector<std::vector<double>> out;
    out.reserve(prompts.size());
    for (size_t i = 0; i < prompts.size(); ++i) {
        const auto& p = prompts[i];
        if (tmpl.rendered_len(static_cast<int>(p.size())) > lm.config().context_len) {
            // too long to render: drop the row, report the index
            if (skipped) skipped->push_back(i);
            continue;
        }
        out.push_back(last_hidden_state(lm, p, tmpl));
    }
    return out;
}

namespace {

// cyclic Jacobi on a symmetric matrix; returns eigenvalues on the diagonal
// and accumulates rotations into V (columns are eigenvectors)
void jacobi_eig(std::vector<double>& A, std::vector<double>& V, int d) {
    V.assign(static_cast<size_t>(d) * d, 0.0);
    for (int i = 0; i < d; ++i) V[static_cast<size_t>(i) * d + i] = 1.0;
    auto at = [&](std::vector<double>& M, int r, int c) -> double& {
        return M[static_cast<size_t>(r) * d + c];
    };
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0;
        for (int p = 0; p < d; ++p)
            for (int q = p + 1; q < d; ++q) off += at(A, p, q) * at(A, p, q);
        if (off < 1e-24) break;
        for (int p = 0; p < d; ++p) {
            for (int q = p + 1; q < d; ++q) {
                double apq = at(A, p, q);
                if (std::abs(apq) < 1e-300) continue;
                double app = at(A, p, p), aqq = at(A, q, q);
                double theta = (aqq - app) / (2 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int i = 0; i < d; ++i) {
                    double aip = at(A, i, p), aiq = at(A, i, q);
                    at(A, i, p) = c * aip - s * aiq;
                    at(A, i, q) = s * aip + c * aiq;
                }
                for (int i = 0; i < d; ++i) {
                    double api = at(A, p, i), aqi = at(A, q, i);
                    at(A, p, i) = c * api - s * aqi;
                    at(A, q, i) = s * api + c * aqi;
                }
                for (int i = 0; i < d; ++i) {
                    double vip = at(V, i, p), viq = at(V, i, q);
                    at(V, i, p) = c * vip - s * viq;
                    at(V, i, q) = s * vip + c * viq;
                }
            }
        }
    }
}

}  // namespace

Projection project_2d(const std::vector<std::vector<double>>& X) {
    size_t n = X.size();
    if (n < 3) throw ValidationError("projection needs at least 3 points");
    int d = static_cast<int>(X[0].size());
    for (const auto& row : X)
        if (static_cast<int>(row.size()) != d)
            throw ValidationError("projection rows must share one dimension");
    if (d < 2) throw ValidationError("projection needs at least 2 input dimensions");

    std::vector<double> mean(static_cast<size_t>(d), 0.0);
    for (const auto& row : X)
        for (int i = 0; i < d; ++i) mean[static_cast<size_t>(i)] += row[static_cast<size_t>(i)];
    for (auto& m : mean) m /= static_cast<double>(n);

    std::vector<double> C(static_cast<size_t>(d) * d, 0.0);
    for (const auto& row : X) {
        for (int i = 0; i < d; ++i) {
            double xi = row[static_cast<size_t>(i)] - mean[static_cast<size_t>(i)];
            for (int j = i; j < d; ++j) {
                double xj = row[static_cast<size_t>(j)] - mean[static_cast<size_t>(j)];
                C[static_cast<size_t>(i) * d + j] += xi * xj;
            }
        }
    }
    for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) {
            C[static_cast<size_t>(i) * d + j] /= static_cast<double>(n - 1);
            C[static_cast<size_t>(j) * d + i] = C[static_cast<size_t>(i) * d + j];
        }

    std::vector<double> V;
    jacobi_eig(C, V, d);
    std::vector<std::pair<double, int>> eig;
    for (int i = 0; i < d; ++i) eig.push_back({C[static_cast<size_t>(i) * d + i], i});
    std::stable_sort(eig.begin(), eig.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    if (!(eig[0].first > 0) || !(eig[1].first > 0))
        throw ValidationError("projection degenerate: fewer than 2 directions of variance");

    Projection out;
    out.explained = {eig[0].first, eig[1].first};
    std::array<std::vector<double>, 2> comp;
    for (int c = 0; c < 2; ++c) {
        comp[static_cast<size_t>(c)].resize(static_cast<size_t>(d));
        int col = eig[static_cast<size_t>(c)].second;
        for (int i = 0; i < d; ++i)
            comp[static_cast<size_t>(c)][static_cast<size_t>(i)] =
                V[static_cast<size_t>(i) * d + col];
        // fix the sign: the largest-|loading| coordinate points positive
        int arg = 0;
        for (int i = 1; i < d; ++i)
            if (std::abs(comp[static_cast<size_t>(c)][static_cast<size_t>(i)]) >
                std::abs(comp[static_cast<size_t>(c)][static_cast<size_t>(arg)]))
                arg = i;
        if (comp[static_cast<size_t>(c)][static_cast<size_t>(arg)] < 0)
            for (auto& v : comp[static_cast<size_t>(c)]) v = -v;
    }
    out.points.reserve(n);
    for (const auto& row : X) {
        std::array<double, 2> pt{0.0, 0.0};
        for (int c = 0; c < 2; ++c)
            for (int i = 0; i < d; ++i)
                pt[static_cast<size_t>(c)] += (row[static_cast<size_t>(i)] - mean[static_cast<size_t>(i)]) *
                                              comp[static_cast<size_t>(c)][static_cast<size_t>(i)];
        out.points.push_back(pt);
    }
    return out;
}

double silhouette(const std::vector<std::vector<double>>& X, const std::vector<int>& labels) {
    size_t n = X.size();
    if (n != labels.size()) throw ValidationError("point and label counts differ");
    if (n < 3) throw ValidationError("silhouette needs at least 3 points");
    std::map<int, std::vector<size_t>> clusters;
    for (size_t i = 0; i < n; ++i) clusters[labels[i]].push_back(i);
    if (clusters.size() < 2) throw ValidationError("silhouette needs at least 2 clusters");

    auto dist = [&](size_t a, size_t b) {
        double sq = 0;
        for (size_t i = 0; i < X[a].size(); ++i) {
            double diff = X[a][i] - X[b][i];
            sq += diff * diff;
        }
        return std::sqrt(sq);
    };

    for (const auto& [lab, members] : clusters)
        if (members.size() < 2)
            throw ValidationError("silhouette cluster " + std::to_string(lab) +
                                  " has fewer than 2 members");

    double total = 0;
    for (size_t i = 0; i < n; ++i) {
        const auto& own = clusters[labels[i]];
        double a = 0;
        for (size_t j : own)
            if (j != i) a += dist(i, j);
        a /= static_cast<double>(own.size() - 1);
        double b = 0;
        bool first = true;
        for (const auto& [lab, members] : clusters) {
            if (lab == labels[i]) continue;
            double m = 0;
            for (size_t j : members) m += dist(i, j);
            m /= static_cast<double>(members.size());
            if (first || m < b) {
                b = m;
                first = false;
            }
        }
        total += (b - a) / std::max(a, b);
    }
    return total / static_cast<double>(n);
}

}  // namespace babel
