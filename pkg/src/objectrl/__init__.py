"""Detection-aware image correction: a policy-gradient agent that picks one
photometric factor per image to maximise an object detector's performance,
plus the grid-search baseline and TP-Score evaluation tooling around it."""

from .boxes import (
    BBox,
    Detection,
    DetectionScore,
    GroundTruthBox,
    MatchResult,
    detection_score,
    f1_score,
    iou,
    match_detections,
)
from .detectors import (
    Detector,
    DetectorError,
    DetectorProfile,
    RemoteDetector,
    SyntheticDetector,
    builtin_profiles,
    fitness,
    make_detector,
    synthetic_detect,
)
from .environment import (
    DistortionEnv,
    EnvConfig,
    EpisodeRecord,
    RewardConfig,
    compute_reward,
)
from .evaluation import (
    EvalItem,
    EvalReport,
    GridActionSet,
    TpScoreTable,
    cross_policy_eval,
    emit_report,
    grid_search_eval,
    make_eval_set,
    policy_eval,
    tp_count,
    tp_score_accumulate,
)
from .imaging import (
    DistortionKind,
    DistortionScale,
    FactorMode,
    ImageBuffer,
    apply_brightness,
    apply_color,
    apply_contrast,
    apply_distortion,
    grayscale,
    load_image,
    resize_to_state,
    sample_factor,
    save_image,
)
from .networks import (
    NetworkSpec,
    PolicyParams,
    actor_forward,
    critic_forward,
    load_checkpoint,
    save_checkpoint,
)
from .ppo import PpoConfig, explore_epsilon, policy_action, ppo_update, sample_action, train
from .scenes import DatasetItem, SceneSpec, generate_dataset, generate_scene, load_dataset, write_dataset

__version__ = "0.1.0"
