from .signal_model import signal, signal_series, signal_jacobian, add_noise, synthesize
from .mle_fit import fit_voxel, fit_map, crlb_t1
from .ddpm_schedule import NoiseSchedule, make_schedule, q_sample
from .map_scaling import MapScaler, scale_map, unscale_map
