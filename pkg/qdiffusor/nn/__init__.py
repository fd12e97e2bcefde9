from .autograd import Tensor, precision, no_grad
from .optim import OptimState, adam_step
from .unet import UNetConfig, DenoiserNet, build_unet, time_embedding
