"""Time-frequency perturbation explanations for black-box time-series classifiers."""

__version__ = "0.1.0"

from .classifier import (  # noqa: E402
    BandEnergyClassifier,
    Classifier,
    ExternalClassifier,
    FunctionClassifier,
    MLPClassifier,
    SoftmaxClassifier,
    TrainConfig,
    band_energy_classifier,
    external_classifier,
    load_model,
    save_model,
    train_classifier,
)
from .dataset import (  # noqa: E402
    GroundTruthRanking,
    LabeledDataset,
    SynthConfig,
    class_templates,
    generate_synthetic,
    ground_truth_ranking,
    load_ucr,
    split_dataset,
    synthetic_regions,
    write_ucr,
)
from .errors import (  # noqa: E402
    CoverageError,
    DatasetNotFoundError,
    ExternalClassifierError,
    FormatError,
    GeometryMismatchError,
    InvalidArgumentError,
    ReconstructionContractError,
    TFExplainError,
    TrainingDivergedError,
    UnsupportedConfigurationError,
)
from .explainers import (  # noqa: E402
    Explanation,
    FiaConfig,
    aggregate_class_explanation,
    fia_explain,
    kernelshap_explain,
    lime_explain,
    rise_explain,
)
from .metrics import (  # noqa: E402
    MetricReport,
    area_under_curves,
    faithfulness_at_k,
    rbo,
    robustness,
)
from .perturbation import (  # noqa: E402
    RbpBaseline,
    TimeFrequencySpace,
    TimeSegmentSpace,
    apply_time_perturbation,
    apply_tf_perturbation,
    compute_rbp,
    sample_masks,
)
from .signal import Spectrogram, WindowSpec, istft, make_window, stft  # noqa: E402
