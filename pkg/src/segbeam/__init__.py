"""Online segmented MVDR beamforming: library, simulator and evaluation tools."""

from .errors import DataError, NumericalBreakdown, ParameterError, SegbeamError, ShapeError
from .mvdr import (CovarianceState, batch_mvdr_weights, default_loading, init_state,
                   mvdr_from_covariance, rank1_update)
from .segmenter import (SegmenterConfig, SegmenterState, fixed_window_mpdr, offline_dp_segment,
                        run_online, step)
from .stft import Spectrogram, StftConfig, istft_inverse, stft_forward
from .scene import ArrayGeometry, SceneSpec, SourceTrack, demo_scene, render_scene, steering_freefield
from .rtf import RtfEstimate, estimate_rtf_cw
from .metrics import MetricsReport, change_point_score, output_power_trace, si_sdr
from .io import AudioBuffer, read_wav, write_wav

__version__ = "0.1.0"
