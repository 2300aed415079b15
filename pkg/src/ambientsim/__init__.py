"""Ambient-RF sensing simulator and signal-processing library.

End-to-end software model of an ambient-signal Doppler sensing pipeline:
OFDM waveform synthesis, multipath moving-object propagation, self-mixing
baseband extraction, constellation sanitization, differential-beamforming
heatmaps, and the associated loss/metric numerics.
"""

from .beamformer import (
    ArrayGeometry,
    DirectionGrid,
    HeatmapFrame,
    differential_beamform,
    direction_vector,
    heatmap_sequence,
    l_array,
    spherical_direction_vector,
    steering_matrix,
    steering_weight,
)
from .dnn_numerics import (
    LossParams,
    PatchSequence,
    PersonTags,
    decoder_shape,
    grouping_loss,
    grouping_loss_grad,
    keypoint_loss,
    keypoint_loss_grad,
    mask_loss,
    mask_loss_grad,
    merge_patches,
    split_patches,
)
from .metrics import KeypointInstance, MaskPair, ap_summary, iou, oks, pck
from .mixer import (
    BasebandStream,
    DopplerConfig,
    analytic_baseband,
    estimate_velocity,
    lowpass_isolate,
    phase_to_distance_slope,
    self_mix,
    unwrap_phase,
)
from .sanitizer import (
    ConstellationFrame,
    SanitizeConfig,
    bias_correct,
    butterworth_lowpass,
    discard_near_origin,
    kmeans,
    local_outlier_factor,
    lof_filter,
    project,
    sanitize_frame,
    sanitize_stream,
    sanitize_window,
)
from .scenario import Scenario, load_scenario, scenario_to_dict, scenario_to_yaml
from .signal_model import (
    SPEED_OF_LIGHT,
    LinearTrajectory,
    OfdmConfig,
    Reflector,
    SampledSignal,
    Scene,
    WaypointTrajectory,
    propagate,
    random_qpsk_symbols,
    synthesize_stream,
    synthesize_symbol,
    trajectory_distance,
)

__version__ = "0.1.0"
