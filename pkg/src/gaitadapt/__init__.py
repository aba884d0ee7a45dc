"""Cross-domain gait embedding lab: supervised metric pretraining on a
labeled source domain, then unsupervised adaptation on an unlabeled target
via entropy-ranked neighborhood discovery and curriculum training.

Everything runs on numpy with hand-written gradients and seeded RNG
streams, so results are reproducible to the byte.
"""

from .numerics import (
    DegenerateInputError,
    cosine_similarity,
    l2_normalize,
    make_rng,
    pairwise_similarity,
    scaled_softmax,
    seed_stream,
)
from .encoder import (
    EncoderParams,
    EncoderShape,
    SilhouetteSequence,
    encode_backward,
    encode_frame,
    encode_sequence,
    init_params,
    load_checkpoint,
    pyramid_map,
    save_checkpoint,
    set_pool,
    zero_grads,
)
from .losses import (
    EmptyTripletError,
    SoftmaxRow,
    anchor_neighborhood_loss,
    entropy,
    softmax_row,
    triplet_loss,
)
from .discovery import (
    CurriculumSchedule,
    MemoryBank,
    Neighborhood,
    bank_entropies,
    build_bank,
    discover_neighborhoods,
    rank_and_select,
    update_bank,
)
from .data import (
    CONDITIONS,
    Dataset,
    DatasetError,
    DomainSpec,
    SequenceRecord,
    generate_domain,
    load_dataset,
    load_manifest,
    read_pgm,
    render_frame,
    sample_pk_batch,
    write_pgm,
)
from .evaluation import (
    EvalProtocol,
    ProtocolError,
    Rank1Result,
    make_protocol,
    rank1,
)
from .pipeline import (
    EpochRecord,
    RunLog,
    TrainConfig,
    adapt_target,
    desk_preset,
    lr_at,
    paper_preset,
    pretrain_source,
)
from .config import (
    ConfigError,
    ExperimentConfig,
    apply_overrides,
    default_source_spec,
    default_target_spec,
    load_config,
    preset_config,
    save_config,
    separable_source_spec,
)

__version__ = "0.1.0"

__all__ = [
    "CONDITIONS",
    "ConfigError",
    "CurriculumSchedule",
    "Dataset",
    "DatasetError",
    "DegenerateInputError",
    "DomainSpec",
    "EmptyTripletError",
    "EncoderParams",
    "EncoderShape",
    "EpochRecord",
    "EvalProtocol",
    "ExperimentConfig",
    "MemoryBank",
    "Neighborhood",
    "ProtocolError",
    "Rank1Result",
    "RunLog",
    "SequenceRecord",
    "SilhouetteSequence",
    "SoftmaxRow",
    "TrainConfig",
    "adapt_target",
    "anchor_neighborhood_loss",
    "apply_overrides",
    "bank_entropies",
    "build_bank",
    "cosine_similarity",
    "default_source_spec",
    "default_target_spec",
    "desk_preset",
    "discover_neighborhoods",
    "encode_backward",
    "encode_frame",
    "encode_sequence",
    "entropy",
    "generate_domain",
    "init_params",
    "l2_normalize",
    "load_checkpoint",
    "load_config",
    "load_dataset",
    "load_manifest",
    "lr_at",
    "make_protocol",
    "make_rng",
    "pairwise_similarity",
    "paper_preset",
    "preset_config",
    "pretrain_source",
    "pyramid_map",
    "rank1",
    "rank_and_select",
    "read_pgm",
    "render_frame",
    "sample_pk_batch",
    "save_checkpoint",
    "save_config",
    "scaled_softmax",
    "separable_source_spec",
    "seed_stream",
    "set_pool",
    "softmax_row",
    "triplet_loss",
    "update_bank",
    "write_pgm",
    "zero_grads",
]
