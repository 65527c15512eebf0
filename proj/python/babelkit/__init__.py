"""Forge gibberish prompts against micro language models and probe why they work."""

try:
    from . import _core as _c
except ImportError:  # build tree: the module sits next to us on sys.path
    import _core as _c

Model = _c.Model
ValidationError = _c.ValidationError
RuntimeFailure = _c.RuntimeFailure
train = _c.train

exact_match = _c.exact_match
normalize_ws = _c.normalize_ws
bigram_conditional_entropy = _c.bigram_conditional_entropy
entropy_resample_std = _c.entropy_resample_std
token_overlap = _c.token_overlap
point_biserial = _c.point_biserial
cosine = _c.cosine
token_frequency = _c.token_frequency

corpus_kinds = _c.corpus_kinds
generate_corpus = _c.generate_corpus
split_sentences = _c.split_sentences
extract_targets = _c.extract_targets
sample_targets = _c.sample_targets
random_token_targets = _c.random_token_targets
natural_prompt = _c.natural_prompt
load_targets = _c.load_targets
length_bucket = _c.length_bucket

perturb_remove = _c.perturb_remove
perturb_replace = _c.perturb_replace
perturb_permute = _c.perturb_permute

collect_reps = _c.collect_reps
project_2d = _c.project_2d
silhouette = _c.silhouette

stable_hash = _c.stable_hash
derive_seed = _c.derive_seed
target_id_of = _c.target_id_of

__version__ = _c.__version__

__all__ = [
    "Model", "ValidationError", "RuntimeFailure", "train",
    "exact_match", "normalize_ws", "bigram_conditional_entropy", "entropy_resample_std",
    "token_overlap", "point_biserial", "cosine", "token_frequency",
    "corpus_kinds", "generate_corpus", "split_sentences", "extract_targets",
    "sample_targets", "random_token_targets", "natural_prompt", "load_targets",
    "length_bucket",
    "perturb_remove", "perturb_replace", "perturb_permute",
    "collect_reps", "project_2d", "silhouette",
    "stable_hash", "derive_seed", "target_id_of",
]
