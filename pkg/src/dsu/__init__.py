"""Two-stage discrete speech unit pipeline.

Stage 1 learns softmax layer-aggregation weights through a continuous-feature
CTC probe; stage 2 freezes them, quantizes the aggregated features with
k-means, post-processes the unit streams (de-duplication, pair merging), and
trains a discrete-token probe so the continuous/discrete gap can be measured.
"""

from .aggregator import (
    LayerWeights,
    layer_norm,
    load_weights,
    save_weights,
    softmax_weights,
    weighted_sum,
    weighted_sum_grad,
)
from .ctc import BLANK_ID, LabelVocab, ctc_grad, ctc_loss, greedy_decode, min_frames
from .discrete_probe import (
    DiscreteProbeModel,
    evaluate_discrete,
    gap_report,
    load_discrete_probe,
    save_discrete_probe,
    train_discrete,
)
from .errors import (
    CorruptionError,
    DsuError,
    FormatError,
    InfeasibleTargetError,
    PipelineStageError,
    TrainingError,
    UnsupportedVersionError,
    ValidationError,
)
from .feature_store import (
    FeatureArchive,
    SynthSpec,
    Utterance,
    read_archive,
    read_durations,
    read_transcripts,
    synth_generate,
    write_archive,
    write_durations,
    write_transcripts,
)
from .metrics import corpus_cer, levenshtein
from .pipeline import (
    PipelineConfig,
    RunReport,
    export_weight_csv,
    load_config,
    run_pipeline,
)
from .probe import (
    ProbeModel,
    TrainConfig,
    evaluate_continuous,
    load_probe,
    save_probe,
    train_stage1,
)
from .quantizer import (
    Codebook,
    KmeansConfig,
    assign,
    distortion,
    kmeans_train,
    load_codebook,
    save_codebook,
)
from .tokenproc import (
    BpeModel,
    UnitSequence,
    bitrate,
    bpe_decode,
    bpe_encode,
    bpe_train,
    dedup,
    load_bpe,
    read_units,
    save_bpe,
    write_units,
)

__version__ = "0.1.0"
