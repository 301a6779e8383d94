"""Learned two-stage optimizer for blind deconvolution, on a numpy autodiff core."""
from .golf import GolfConfig, GolfModel, export_image, extract_prior_gradient, forward_f, forward_g, golf_infer
from .metrics import psnr, ssim
from .trainer import TrainConfig, load_model, save_model, train_f, train_g

__version__ = "0.1.0"

__all__ = [
    "GolfConfig",
    "GolfModel",
    "TrainConfig",
    "export_image",
    "extract_prior_gradient",
    "forward_f",
    "forward_g",
    "golf_infer",
    "load_model",
    "psnr",
    "save_model",
    "ssim",
    "train_f",
    "train_g",
]
