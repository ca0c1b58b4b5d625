"""Synthetic data, dataset ingestion, quality metrics and the toy train/evaluate loops."""
from .checkpoint import load_checkpoint, read_manifest, save_checkpoint
from .data import Crop, Dataset, ingest_video_dir
from .metrics import PSNR_CAP, psnr, ssim
from .scenes import SYNTHETIC_KINDS, SceneKind, SceneSpec, random_scene, synth_video
from .train import EvalTable, TrainConfig, TrainResult, evaluate, load_videos, make_masks, simulate, train

__all__ = [
    "Crop",
    "Dataset",
    "EvalTable",
    "PSNR_CAP",
    "SYNTHETIC_KINDS",
    "SceneKind",
    "SceneSpec",
    "TrainConfig",
    "TrainResult",
    "evaluate",
    "ingest_video_dir",
    "load_checkpoint",
    "load_videos",
    "make_masks",
    "psnr",
    "random_scene",
    "read_manifest",
    "save_checkpoint",
    "simulate",
    "ssim",
    "synth_video",
    "train",
]
