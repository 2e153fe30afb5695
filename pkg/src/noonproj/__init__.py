"""Simulation and analysis of multi-photon temporal distinguishability measured
with the N-arm NOON-state projector."""
from .analysis import (DipFit, ScanCurve, VisibilityPrediction, fit_dips, infer_ea, infer_ea_wings,
                       predict_visibilities, predict_visibility_mk)
from .errors import FitFailure, IllPosedFit, InsufficientWings, InvalidArgument, UnstableEstimate
from .fock import (FockStateHV, FringeModel, ProjectorNetwork, build_projector, fringe_scan,
                   n_fold_rate, noon_projection_rate, product_identity_residual)
from .source import (EAEstimate, GatedEvent, SourceConfig, accidental_fourfold, build_event,
                     effective_ea, fourfold_rate, scan_tv)
from .temporal import (DetectionPattern, Photon, PhotonEnsemble, WavePacket, coincidence_rate,
                       nfold_projector_rate, overlap, spatial_match_calibration, two_fold_inclusive_rate)

__version__ = "0.1.0"
