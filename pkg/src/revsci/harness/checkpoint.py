"""Checkpoint directories: a JSON manifest plus one RVT1 file per parameter tensor."""
import json
from pathlib import Path

from ..numerics import read_tensor, write_tensor
from ..revnet import Network, NetworkConfig
from ..sci import MaskScheme, MaskSet

MANIFEST = "manifest.json"
MASKS = "masks.rvt"


def save_checkpoint(directory, net, masks=None, **info):
    """Write ``net`` (and optionally its masks) to ``directory``; extra keyword info goes in the manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for name, p in net.named_parameters():
        fname = f"{name}.rvt"
        write_tensor(directory / fname, p)
        entries.append({"name": name, "file": fname, "shape": list(p.shape)})
    manifest = {"format": "revsci-checkpoint-1", "network": net.config.to_dict(), "parameters": entries, **info}
    if masks is not None:
        write_tensor(directory / MASKS, masks.masks)
        manifest["masks"] = {"file": MASKS, "scheme": masks.scheme.value, "seed": masks.seed}
    (directory / MANIFEST).write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return directory


def read_manifest(directory):
    path = Path(directory) / MANIFEST
    if not path.exists():
        raise FileNotFoundError(f"no {MANIFEST} in {directory}")
    return json.loads(path.read_text())


def load_checkpoint(directory):
    """Return ``(network, masks_or_None, manifest)``."""
    directory = Path(directory)
    manifest = read_manifest(directory)
    net = Network(NetworkConfig.from_dict(manifest["network"]), init="zeros")
    net.load_parameters({e["name"]: read_tensor(directory / e["file"]) for e in manifest["parameters"]})
    masks = None
    if "masks" in manifest:
        info = manifest["masks"]
        masks = MaskSet(read_tensor(directory / info["file"]), MaskScheme(info["scheme"]), info["seed"])
    return net, masks, manifest
