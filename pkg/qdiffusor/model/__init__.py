from .tissue import TissueParams, TissueSpec, DEFAULT_TISSUES, NIST_SPHERE_T1_MS, NIST_SPHERE_T1_STD_MS
from .protocol import Protocol, NoiseSpec, NoiseKind, DEFAULT_TIS_SECONDS
from .maps import QuantMap, WeightedSeries, CHANNELS
from .manifest import DatasetManifest
from .fit import Bounds, FitOptions, FitResult
from .training import TrainConfig, RegressionConfig
from .evaluation import RoiSpec, RoiRow, RoiReport, UncertaintyResult, ChannelMetrics, RankCorrelation
