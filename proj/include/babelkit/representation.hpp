#pragma once

#include <array>
#include <span>
#include <vector>

#include "babelkit/checkpoint.hpp"
#include "babelkit/model.hpp"

namespace babel {

// final hidden state at the last rendered position, one row per prompt;
// prompts that overflow the context are dropped and their indices appended
// to `skipped` when given
std::vector<std::vector<double>> collect_reps(const LoadedModel& lm,
                                              const std::vector<std::vector<TokenId>>& prompts,
                                              const ChatTemplate& tmpl = {},
                                              std::vector<size_t>* skipped = nullptr);

struct Projection {
    std::vector<std::array<double, 2>> points;
    std::array<double, 2> explained;  // top-2 eigenvalues of the covariance
};

// PCA to two dimensions (covariance eigenvectors via cyclic Jacobi). Sign
// convention: each component's largest-magnitude loading is positive.
Projection project_2d(const std::vector<std::vector<double>>& X);

// mean silhouette over all points, Euclidean distances; labels are cluster ids
double silhouette(const std::vector<std::vector<double>>& X, const std::vector<int>& labels);

}  // namespace babel
