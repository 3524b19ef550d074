"""Length-penalized semantic similarity as a minimum-risk reward, with a
desk-scale training loop and the surrounding evaluation toolchain."""

__version__ = "0.1.0"

from .analysis import (
    BootstrapResult,
    F1Bucket,
    F1Report,
    Histogram,
    PairDiffStats,
    cost_histogram,
    f1_delta,
    lexical_f1,
    metric_compare_sort,
    nbest_pair_stats,
    paired_bootstrap,
    pearson,
    spearman,
)
from .data import FilterConfig, ParallelCorpus, paranmt_filter, trigram_overlap
from .embed import (
    EmbeddingTable,
    ParaphrasePair,
    SimTrainConfig,
    encode,
    init_embeddings,
    margin_loss,
    margin_loss_grad,
    select_negatives,
    sim,
    train_sim,
)
from .errors import DataFormatError, NumericalError
from .metrics import (
    CostKind,
    MetricConfig,
    SimileScorer,
    brevity_penalty,
    corpus_bleu,
    corpus_sim,
    cost,
    length_penalty,
    sentence_bleu_smoothed,
    simile,
    symmetric,
)
from .risk import (
    Candidate,
    MleTrainConfig,
    NBestList,
    RiskTrainConfig,
    RiskTrainResult,
    ToyLexModel,
    decode,
    nbest,
    nesterov_step,
    risk_grad,
    risk_loss,
    seq_logprob,
    token_ls_loss,
    train_mle,
    train_risk,
    weighted_loss,
)
from .subword import BpeModel, detokenize, learn_bpe, segment
