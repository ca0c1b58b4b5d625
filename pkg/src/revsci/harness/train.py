"""Toy training and evaluation loops tying the simulator, network and optimizer together."""
import json
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ..autograd import Adam, BASE_LR, get_engine, lr_schedule, mse_loss
from ..errors import NumericalError
from ..numerics import read_meta, read_tensor
from ..revnet import Network, NetworkConfig, predict
from ..sci import MaskScheme, capture, capture_color, coarse_video, generate_masks, prepare_input
from .checkpoint import load_checkpoint, save_checkpoint
from .data import ingest_video_dir
from .metrics import psnr, ssim
from .scenes import random_scene, synth_video

METRICS_LOG = "metrics.jsonl"


def _tiny_network():
    return NetworkConfig(c1=16, m=2, L=6, B=8)


@dataclass
class TrainConfig:
    """Everything that determines a training run; identical configs give identical logs."""

    network: NetworkConfig = field(default_factory=_tiny_network)
    epochs: int = 1
    batch_size: int = 1
    lr0: float = BASE_LR
    lr_decay: float = 0.9
    decay_every: int = 10
    engine: str = "reversible"
    seed: int = 0
    mask_scheme: str = "shifting"
    frame_shape: tuple = (64, 64)
    train_scenes: int = 500
    val_scenes: int = 8
    noise_sigma: float = 0.0
    data_dir: str = None

    def __post_init__(self):
        if isinstance(self.network, dict):
            self.network = NetworkConfig.from_dict(self.network)
        self.frame_shape = tuple(int(n) for n in self.frame_shape)
        self.mask_scheme = MaskScheme(self.mask_scheme).value
        get_engine(self.engine)
        if self.epochs < 0 or self.batch_size < 1 or self.train_scenes < 1 or self.val_scenes < 0:
            raise ValueError("epochs >= 0, batch_size >= 1, train_scenes >= 1 and val_scenes >= 0 required")

    @property
    def video_shape(self):
        B = self.network.B
        return (3, B, *self.frame_shape) if self.network.color else (B, *self.frame_shape)

    def to_dict(self):
        d = asdict(self)
        d["frame_shape"] = list(self.frame_shape)
        return d

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown TrainConfig keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class Sample:
    truth: np.ndarray  # (B, nx, ny) or (3, B, nx, ny)
    ce: object  # CoarseEstimate


@dataclass
class TrainResult:
    net: Network
    masks: object
    history: list
    final_checkpoint: Path = None
    best_checkpoint: Path = None


def simulate(video, masks, noise_sigma=0.0, seed=None):
    """Capture ``video`` and form the network input (guarded against uncovered pixels)."""
    video = np.asarray(video)
    m = masks.astype(video.dtype)
    if video.ndim == 4:
        meas = capture_color(video, m, noise_sigma, seed)
    else:
        meas = capture(video, m, noise_sigma, seed)
    return meas, prepare_input(meas, m, guard=True)


def make_masks(cfg):
    nx, ny = cfg.frame_shape
    # a random binary pattern leaves a few pixels uncovered at realistic sizes; the guard handles them
    return generate_masks(cfg.network.B, nx, ny, cfg.mask_scheme, cfg.seed, require_coverage=False)


def _videos(cfg, count, stream):
    if cfg.data_dir is not None:
        return list(ingest_video_dir(cfg.data_dir, cfg.video_shape, count, seed=[cfg.seed, stream]))
    seeds = np.random.default_rng([cfg.seed, stream]).integers(2 ** 31, size=count)
    return [synth_video(random_scene(int(s), cfg.video_shape)) for s in seeds]


def _samples(videos, masks, cfg, stream):
    dt = cfg.network.np_dtype
    out = []
    for i, v in enumerate(videos):
        v = np.asarray(v, dtype=dt)
        _, ce = simulate(v, masks, cfg.noise_sigma, seed=[cfg.seed, stream, i])
        out.append(Sample(v, ce))
    return out


def _validate(net, samples):
    if not samples:
        return {}
    rec = {"val_loss": [], "val_psnr": [], "val_ssim": [], "coarse_psnr": [], "coarse_ssim": []}
    for s in samples:
        xhat = predict(net, s.ce.network_input)
        base = coarse_video(s.ce)
        rec["val_loss"].append(mse_loss(xhat, s.truth))
        rec["val_psnr"].append(psnr(xhat, s.truth))
        rec["val_ssim"].append(ssim(xhat, s.truth))
        rec["coarse_psnr"].append(psnr(base, s.truth))
        rec["coarse_ssim"].append(ssim(base, s.truth))
    return {k: float(np.mean(v)) for k, v in rec.items()}


def _batch_gradient(net, engine, batch):
    total, loss = None, 0.0
    for s in batch:
        report, _ = engine(net, s.ce.network_input, s.truth)
        loss += report.loss
        if total is None:
            total = {k: g.copy() for k, g in report.grads.items()}
        else:
            for k, g in report.grads.items():
                total[k] += g
    scale = 1.0 / len(batch)
    for g in total.values():
        g *= g.dtype.type(scale)
    return total, loss * scale


def _save_last_good(out_dir, params, net, masks, cfg, info):
    if out_dir is None:
        return None
    good = net.copy()
    good.load_parameters(params)
    return save_checkpoint(Path(out_dir) / "last_good", good, masks, train=cfg.to_dict(), **info)


def train(cfg, out_dir=None, train_data=None, val_data=None):
    """Train a fresh network described by ``cfg``.

    Training videos come from ``train_data`` if given, else from ``cfg.data_dir``
    crops, else from synthetic scenes; likewise for validation. With ``out_dir``
    the per-epoch metrics are appended to ``metrics.jsonl`` and checkpoints are
    written to ``final/`` and ``best/`` (best validation PSNR). A non-finite
    loss or parameter aborts with :class:`NumericalError` after saving the
    last finite parameters to ``last_good/``.
    """
    net = Network(cfg.network)
    masks = make_masks(cfg)
    engine = get_engine(cfg.engine)
    train_set = _samples(train_data if train_data is not None else _videos(cfg, cfg.train_scenes, 1), masks, cfg, 1)
    val_set = _samples(val_data if val_data is not None else _videos(cfg, cfg.val_scenes, 2), masks, cfg, 2)

    log_file = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        log_file = out_dir / METRICS_LOG
        log_file.write_text("")

    opt = Adam(cfg.lr0)
    history, step = [], 0
    best_psnr, best_dir = -np.inf, None
    for epoch in range(cfg.epochs):
        lr = lr_schedule(epoch, cfg.lr0, cfg.lr_decay, cfg.decay_every)
        order = np.random.default_rng([cfg.seed, 3, epoch]).permutation(len(train_set))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_set[i] for i in order[start:start + cfg.batch_size]]
            before = {k: p.copy() for k, p in net.named_parameters()}
            try:
                with np.errstate(over="ignore", invalid="ignore"):  # non-finite values are checked below
                    grads, loss = _batch_gradient(net, engine, batch)
                opt.step(net.named_parameters(), grads, lr=lr)
                if not all(np.isfinite(p).all() for _, p in net.named_parameters()):
                    raise NumericalError(f"parameters became non-finite at step {step + 1}")
            except NumericalError as err:
                saved = _save_last_good(out_dir, before, net, masks, cfg, {"epoch": epoch, "step": step})
                err.checkpoint = saved
                raise
            step += 1
            losses.append(loss)

        record = {"epoch": epoch + 1, "step": step, "lr": lr, "train_loss": float(np.mean(losses))}
        record.update(_validate(net, val_set))
        history.append(record)
        if log_file is not None:
            with log_file.open("a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
            if record.get("val_psnr", -np.inf) > best_psnr:
                best_psnr = record["val_psnr"]
                best_dir = save_checkpoint(out_dir / "best", net, masks, train=cfg.to_dict(), **record)

    final_dir = None
    if out_dir is not None:
        info = history[-1] if history else {"epoch": 0, "step": 0}
        final_dir = save_checkpoint(out_dir / "final", net, masks, train=cfg.to_dict(), **info)
    return TrainResult(net, masks, history, final_dir, best_dir)


@dataclass
class EvalTable:
    rows: list  # dicts: scene, psnr, ssim, seconds, coarse_psnr, coarse_ssim

    def mean(self):
        keys = ("psnr", "ssim", "seconds", "coarse_psnr", "coarse_ssim")
        return {k: float(np.mean([r[k] for r in self.rows])) for k in keys}

    def to_json(self):
        return {"rows": self.rows, "mean": self.mean()}


def load_videos(directory):
    """Every ``.rvt``/``.npy`` ground-truth video in ``directory``, keyed by file stem.

    Files whose sidecar declares another role (masks, measurement,
    reconstruction) are ignored.
    """
    out = {}
    for p in sorted(Path(directory).iterdir()):
        if read_meta(p).get("role", "truth") != "truth":
            continue
        if p.suffix == ".rvt":
            out[p.stem] = read_tensor(p)
        elif p.suffix == ".npy":
            out[p.stem] = np.load(p)
    if not out:
        raise ValueError(f"no .rvt or .npy videos in {directory}")
    return out


def evaluate(checkpoint, dataset, masks=None, noise_sigma=0.0, seed=0):
    """Per-scene PSNR/SSIM of the network and of the coarse-estimate baseline.

    ``checkpoint`` is a checkpoint directory or a :class:`Network`; ``dataset``
    a directory of ground-truth videos, a mapping name -> video or a sequence
    of videos. Masks default to those stored with the checkpoint. ``seconds``
    is the wall-clock time to go from measurement to reconstruction.
    """
    if isinstance(checkpoint, Network):
        net = checkpoint
    else:
        net, stored, _ = load_checkpoint(checkpoint)
        masks = stored if masks is None else masks
    if masks is None:
        raise ValueError("no masks given and none stored with the checkpoint")
    if isinstance(dataset, (str, Path)):
        dataset = load_videos(dataset)
    items = dataset.items() if isinstance(dataset, dict) else enumerate(dataset)

    dt = net.config.np_dtype
    rows = []
    for i, (name, truth) in enumerate(items):
        truth = np.asarray(truth, dtype=dt)
        meas, _ = simulate(truth, masks, noise_sigma, seed=[seed, i])
        t0 = time.perf_counter()
        ce = prepare_input(meas, masks.astype(dt), guard=True)
        xhat = predict(net, ce.network_input)
        seconds = time.perf_counter() - t0
        base = coarse_video(ce)
        rows.append({"scene": str(name), "psnr": psnr(xhat, truth), "ssim": ssim(xhat, truth),
                     "seconds": seconds, "coarse_psnr": psnr(base, truth), "coarse_ssim": ssim(base, truth)})
    return EvalTable(rows)
