"""Surrogate models: MLP baseline plus GCN and ARMA graph convolutions,
with training, early stopping, k-fold grid search, and checkpoint files.

Models consume the log1p-scale feature encodings from `scenarios` and learn
log1p-scale targets; predictions are inverse-transformed back to counts.
"""

from __future__ import annotations

import json
import struct
import time
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.sparse as sparse

from . import autodiff as ad
from .autodiff import Adam, Tape, Tensor, add, add_bias, elu, glorot_uniform, mape_loss, matmul, relu, scale, sp_matmul
from .metapop import normalize_adjacency
from .scenarios import (
    COMPARTMENT_WIDTH,
    INPUT_DAYS,
    NONSPATIAL_WIDTH,
    ScenarioDataset,
    inverse_log1p,
    transform_log1p,
)

LAYER_KINDS = ("dense", "gcn_conv", "arma_conv")
ACTIVATIONS = ("relu", "elu", "linear")


class CheckpointError(Exception):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class DivergenceError(Exception):
    """Training loss became non-finite."""


class EncodingMismatchError(ValueError):
    """Sample encoding does not match what the model expects."""


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    channels: int
    activation: str = "relu"
    stacks: int = 1
    iterations: int = 1

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if self.kind == "arma_conv" and (self.stacks < 1 or self.iterations < 1):
            raise ValueError("arma_conv needs stacks >= 1 and iterations >= 1")


@dataclass(frozen=True)
class ModelSpec:
    layers: tuple[LayerSpec, ...]
    input_width: int
    output_width: int
    horizon: int
    spatial: bool

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("a model needs at least one layer")
        last = self.layers[-1]
        if last.kind != "dense" or last.activation != "linear":
            raise ValueError("final layer must be a linear dense head")
        if last.channels != self.output_width:
            raise ValueError("final layer width must equal output_width")
        if self.output_width != self.horizon * COMPARTMENT_WIDTH:
            raise ValueError("output_width must equal horizon * 48")
        if not self.spatial and any(l.kind != "dense" for l in self.layers):
            raise ValueError("non-spatial models are dense-only")

    def to_dict(self) -> dict:
        return {
            "layers": [
                {
                    "kind": l.kind,
                    "channels": l.channels,
                    "activation": l.activation,
                    "stacks": l.stacks,
                    "iterations": l.iterations,
                }
                for l in self.layers
            ],
            "input_width": self.input_width,
            "output_width": self.output_width,
            "horizon": self.horizon,
            "spatial": self.spatial,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelSpec":
        return cls(
            layers=tuple(LayerSpec(**layer) for layer in doc["layers"]),
            input_width=doc["input_width"],
            output_width=doc["output_width"],
            horizon=doc["horizon"],
            spatial=doc["spatial"],
        )


def arma_model_spec(
    input_width: int,
    horizon: int,
    n_layers: int = 3,
    channels: int = 64,
    stacks: int = 1,
    iterations: int = 1,
    activation: str = "relu",
) -> ModelSpec:
    layers = tuple(
        LayerSpec("arma_conv", channels, activation, stacks, iterations) for _ in range(n_layers)
    )
    head = LayerSpec("dense", horizon * COMPARTMENT_WIDTH, "linear")
    return ModelSpec(layers + (head,), input_width, horizon * COMPARTMENT_WIDTH, horizon, True)


def gcn_model_spec(input_width: int, horizon: int, n_layers: int = 3, channels: int = 64) -> ModelSpec:
    layers = tuple(LayerSpec("gcn_conv", channels, "relu") for _ in range(n_layers))
    head = LayerSpec("dense", horizon * COMPARTMENT_WIDTH, "linear")
    return ModelSpec(layers + (head,), input_width, horizon * COMPARTMENT_WIDTH, horizon, True)


def mlp_model_spec(horizon: int, hidden_layers: int = 2, width: int = 256) -> ModelSpec:
    layers = tuple(LayerSpec("dense", width, "elu") for _ in range(hidden_layers))
    head = LayerSpec("dense", horizon * COMPARTMENT_WIDTH, "linear")
    return ModelSpec(
        layers + (head,),
        INPUT_DAYS * NONSPATIAL_WIDTH,
        horizon * COMPARTMENT_WIDTH,
        horizon,
        False,
    )


# Published-scale preset: seven ARMA layers at 512 channels, one stack, one
# iteration. Desk-scale default is 3x64.
def paper_arma_spec(input_width: int, horizon: int) -> ModelSpec:
    return arma_model_spec(input_width, horizon, n_layers=7, channels=512)


@dataclass
class GraphOperators:
    """Sparse propagation matrices shared by all samples of one graph."""

    arma: sparse.csr_matrix  # D^-1/2 A D^-1/2, no self-loops
    gcn: sparse.csr_matrix  # D~^-1/2 (A+I) D~^-1/2

    @classmethod
    def from_adjacency(cls, adjacency: np.ndarray, dtype=np.float32) -> "GraphOperators":
        arma = normalize_adjacency(adjacency).astype(dtype)
        gcn = gcn_adjacency(adjacency).astype(dtype)
        return cls(arma=arma, gcn=gcn)


def gcn_adjacency(adjacency: np.ndarray) -> sparse.csr_matrix:
    """Self-loop-augmented symmetric normalization used by GCN layers."""
    a = np.asarray(adjacency, dtype=float)
    a_hat = a + np.eye(a.shape[0])
    degrees = a_hat.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(degrees)
    return sparse.csr_matrix(a_hat * inv_sqrt[:, None] * inv_sqrt[None, :])


def _activate(x, activation: str):
    if activation == "relu":
        return relu(x)
    if activation == "elu":
        return elu(x)
    return x


def dense_forward(x, weight, bias=None, activation: str = "linear"):
    h = matmul(x, weight)
    if bias is not None:
        h = add_bias(h, bias)
    return _activate(h, activation)


def gcn_conv_forward(x, gcn_matrix, weight, bias=None, activation: str = "relu"):
    """sigma(A_hat x W) with the self-loop-normalized adjacency."""
    h = sp_matmul(gcn_matrix, matmul(x, weight))
    if bias is not None:
        h = add_bias(h, bias)
    return _activate(h, activation)


class ArmaStack(NamedTuple):
    """Weights of one graph-convolution-with-skip stack."""

    w_in: object  # (in, ch): first iteration
    w_rec: object | None  # (ch, ch): shared by iterations 2..T
    v: object  # (in, ch): skip from the layer input, shared across iterations
    bias: object  # (ch,)


def arma_conv_forward(x0, normalized_adjacency, stacks, iterations: int, activation: str = "relu"):
    """K parallel recurrent stacks, averaged.

    Each stack iterates h <- sigma(A~ h W + x0 V + b) starting from the layer
    input, with W shared across iterations after the first (which maps the
    input width to the channel width).
    """
    outputs = []
    for stack in stacks:
        h = _gcs_step(x0, x0, stack.w_in, stack.v, stack.bias, normalized_adjacency, activation)
        for _ in range(iterations - 1):
            h = _gcs_step(h, x0, stack.w_rec, stack.v, stack.bias, normalized_adjacency, activation)
        outputs.append(h)
    if len(outputs) == 1:
        return outputs[0]
    acc = outputs[0]
    for out in outputs[1:]:
        acc = add(acc, out)
    return scale(acc, 1.0 / len(outputs))


def _gcs_step(h, x0, w, v, bias, adjacency, activation):
    propagated = sp_matmul(adjacency, matmul(h, w))
    mixed = add(propagated, matmul(x0, v))
    if bias is not None:
        mixed = add_bias(mixed, bias)
    return _activate(mixed, activation)


class Model:
    """A stack of layers with named parameter tensors."""

    def __init__(self, spec: ModelSpec, seed: int = 0):
        self.spec = spec
        self.weights: OrderedDict[str, Tensor] = OrderedDict()
        rng = np.random.default_rng(seed)
        width = spec.input_width
        for i, layer in enumerate(spec.layers):
            prefix = f"layer{i}"
            if layer.kind in ("dense", "gcn_conv"):
                self._add(f"{prefix}.w", glorot_uniform(rng, width, layer.channels))
                self._add(f"{prefix}.b", np.zeros(layer.channels, dtype=np.float32))
            else:
                for k in range(layer.stacks):
                    self._add(f"{prefix}.s{k}.w_in", glorot_uniform(rng, width, layer.channels))
                    if layer.iterations > 1:
                        self._add(
                            f"{prefix}.s{k}.w_rec",
                            glorot_uniform(rng, layer.channels, layer.channels),
                        )
                    self._add(f"{prefix}.s{k}.v", glorot_uniform(rng, width, layer.channels))
                    self._add(f"{prefix}.s{k}.b", np.zeros(layer.channels, dtype=np.float32))
            width = layer.channels

    def _add(self, name: str, value: np.ndarray):
        self.weights[name] = Tensor(value, requires_grad=True)

    def parameters(self) -> list[Tensor]:
        return list(self.weights.values())

    def zero_grad(self):
        for p in self.weights.values():
            p.zero_grad()

    def load_weights(self, arrays: dict[str, np.ndarray]):
        if set(arrays) != set(self.weights):
            raise CorruptCheckpointError("weight names do not match the model spec")
        for name, value in arrays.items():
            if value.shape != self.weights[name].data.shape:
                raise CorruptCheckpointError(f"weight {name} has shape {value.shape}")
            self.weights[name].data = value.astype(np.float32, copy=True)

    def weight_arrays(self) -> OrderedDict[str, np.ndarray]:
        return OrderedDict((name, t.data.copy()) for name, t in self.weights.items())

    def forward(self, x, operators: GraphOperators | None = None, tape: Tape | None = None):
        """Forward pass; with a tape the pass is recorded for backprop."""
        if tape is not None:
            h = tape.constant(np.asarray(x, dtype=np.float32))
            get = lambda name: self.weights[name]
        else:
            h = np.asarray(x, dtype=np.float32)
            get = lambda name: self.weights[name].data
        needs_graph = any(l.kind in ("gcn_conv", "arma_conv") for l in self.spec.layers)
        if needs_graph and operators is None:
            raise ValueError("graph layers need GraphOperators")
        for i, layer in enumerate(self.spec.layers):
            prefix = f"layer{i}"
            if layer.kind == "dense":
                h = dense_forward(h, get(f"{prefix}.w"), get(f"{prefix}.b"), layer.activation)
            elif layer.kind == "gcn_conv":
                h = gcn_conv_forward(
                    h, operators.gcn, get(f"{prefix}.w"), get(f"{prefix}.b"), layer.activation
                )
            else:
                stacks = [
                    ArmaStack(
                        w_in=get(f"{prefix}.s{k}.w_in"),
                        w_rec=get(f"{prefix}.s{k}.w_rec") if layer.iterations > 1 else None,
                        v=get(f"{prefix}.s{k}.v"),
                        bias=get(f"{prefix}.s{k}.b"),
                    )
                    for k in range(layer.stacks)
                ]
                h = arma_conv_forward(h, operators.arma, stacks, layer.iterations, layer.activation)
        return h


def _nonspatial_feature_matrix(features: np.ndarray) -> np.ndarray:
    if features.ndim == 2 and features.shape == (INPUT_DAYS, NONSPATIAL_WIDTH):
        return features.reshape(-1)
    raise EncodingMismatchError(f"expected (5, {NONSPATIAL_WIDTH}) features, got {features.shape}")


def predict(model: Model, features: np.ndarray, operators: GraphOperators | None = None) -> np.ndarray:
    """Original-scale per-day predictions for one encoded sample.

    Returns (horizon, n, 48) for spatial models and (horizon, 48) otherwise;
    counts are clamped at zero after the inverse log1p transform.
    """
    spec = model.spec
    features = np.asarray(features, dtype=np.float32)
    if spec.spatial:
        if features.ndim != 2 or features.shape[1] != spec.input_width:
            raise EncodingMismatchError(
                f"expected (n, {spec.input_width}) node features, got {features.shape}"
            )
        out = model.forward(features, operators)  # (n, horizon*48)
        n = features.shape[0]
        decoded = inverse_log1p(out).reshape(n, spec.horizon, COMPARTMENT_WIDTH)
        return np.maximum(decoded.transpose(1, 0, 2), 0.0)
    flat = _nonspatial_feature_matrix(features)
    out = model.forward(flat[np.newaxis, :], None)  # (1, horizon*48)
    decoded = inverse_log1p(out[0]).reshape(spec.horizon, COMPARTMENT_WIDTH)
    return np.maximum(decoded, 0.0)


def predict_batch(model: Model, features: np.ndarray, operators: GraphOperators | None = None) -> np.ndarray:
    """Original-scale predictions for a stacked batch of encoded samples."""
    spec = model.spec
    features = np.asarray(features, dtype=np.float32)
    out = model.forward(features, operators)
    if spec.spatial:
        batch, n = features.shape[0], features.shape[1]
        decoded = inverse_log1p(out).reshape(batch, n, spec.horizon, COMPARTMENT_WIDTH)
        return np.maximum(decoded.transpose(0, 2, 1, 3), 0.0)
    decoded = inverse_log1p(out).reshape(features.shape[0], spec.horizon, COMPARTMENT_WIDTH)
    return np.maximum(decoded, 0.0)


def training_arrays(dataset: ScenarioDataset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack the dataset into (features, log-scale targets, raw labels)."""
    if not dataset.samples:
        raise ValueError("dataset is empty")
    spatial = dataset.config.spatial
    feats, targets, labels = [], [], []
    for record in dataset.samples:
        labels.append(record.labels)
        if spatial:
            feats.append(record.features)
            # (horizon, n, 48) -> per-node rows of day-major outputs
            per_node = record.labels.transpose(1, 0, 2).reshape(record.labels.shape[1], -1)
            targets.append(transform_log1p(per_node))
        else:
            feats.append(record.features.reshape(-1))
            targets.append(transform_log1p(record.labels.reshape(-1)))
    return (
        np.stack(feats).astype(np.float32),
        np.stack(targets).astype(np.float32),
        np.stack(labels).astype(np.float32),
    )


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 400
    patience: int = 50
    min_delta: float = 0.0
    seed: int = 0
    loss_floor: float = ad.DENOMINATOR_FLOOR
    verbose: bool = False


@dataclass
class Checkpoint:
    spec: ModelSpec
    weights: OrderedDict
    meta: dict
    schema_version: int = 1


def model_from_checkpoint(checkpoint: Checkpoint) -> Model:
    model = Model(checkpoint.spec, seed=0)
    model.load_weights(checkpoint.weights)
    return model


def _original_scale_mape(predictions: np.ndarray, labels: np.ndarray) -> float:
    return mape_loss(predictions.ravel(), labels.ravel().astype(np.float64))


def evaluate_mape(
    model: Model, features: np.ndarray, labels: np.ndarray, operators: GraphOperators | None
) -> float:
    """Original-scale MAPE of the model over stacked samples."""
    predictions = predict_batch(model, features, operators)
    return _original_scale_mape(predictions.astype(np.float64), labels)


def train(
    dataset: ScenarioDataset,
    train_indices,
    val_indices,
    spec: ModelSpec,
    config: TrainConfig,
    adjacency: np.ndarray | None = None,
) -> Checkpoint:
    """Minimize MAPE on log-scale targets; early-stop on original-scale
    validation MAPE and return the best checkpoint seen."""
    features, targets, labels = training_arrays(dataset)
    operators = GraphOperators.from_adjacency(adjacency) if adjacency is not None else None
    model = Model(spec, seed=config.seed)
    optimizer = Adam(model.parameters(), lr=config.lr)
    train_indices = np.asarray(list(train_indices), dtype=int)
    val_indices = np.asarray(list(val_indices), dtype=int)
    if len(train_indices) == 0 or len(val_indices) == 0:
        raise ValueError("both train and validation splits must be nonempty")

    best_mape = np.inf
    best_weights = model.weight_arrays()
    best_epoch = -1
    epochs_without_improvement = 0
    started = time.perf_counter()
    epochs_run = 0

    for epoch in range(config.max_epochs):
        epochs_run = epoch + 1
        order = np.random.default_rng((config.seed, epoch)).permutation(train_indices)
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            tape = Tape()
            out = model.forward(features[batch], operators, tape=tape)
            loss = mape_loss(out, targets[batch], floor=config.loss_floor)
            if not np.isfinite(float(loss.data)):
                raise DivergenceError(f"non-finite training loss at epoch {epoch}")
            optimizer.zero_grad()
            tape.backward(loss)
            optimizer.step()
        val_mape = evaluate_mape(model, features[val_indices], labels[val_indices], operators)
        if config.verbose:
            print(f"epoch {epoch}: val MAPE {val_mape:.3f}%")
        if val_mape < best_mape - config.min_delta:
            best_mape = val_mape
            best_weights = model.weight_arrays()
            best_epoch = epoch
            epochs_without_improvement = 0
        else:
            epochs_without_improvement += 1
            if epochs_without_improvement > config.patience:
                break

    meta = {
        "seed": config.seed,
        "epochs_run": epochs_run,
        "best_epoch": best_epoch,
        "best_val_mape": float(best_mape),
        "train_seconds": time.perf_counter() - started,
        "lr": config.lr,
        "batch_size": config.batch_size,
        "patience": config.patience,
    }
    return Checkpoint(spec=spec, weights=best_weights, meta=meta)


@dataclass
class GridCell:
    name: str
    spec: ModelSpec
    fold_mapes: list[float] = field(default_factory=list)
    mean_val_mape: float = np.inf
    std_val_mape: float = 0.0
    train_seconds: float = 0.0
    status: str = "ok"


def kfold_indices(indices, k: int, seed: int) -> list[np.ndarray]:
    indices = np.asarray(list(indices), dtype=int)
    if k < 2 or k > len(indices):
        raise ValueError("k must lie in [2, n_samples]")
    shuffled = np.random.default_rng(seed).permutation(indices)
    return [fold for fold in np.array_split(shuffled, k)]


def grid_search(
    space: list[tuple[str, ModelSpec]],
    dataset: ScenarioDataset,
    train_indices,
    k: int,
    config: TrainConfig,
    adjacency: np.ndarray | None = None,
) -> list[GridCell]:
    """k-fold cross-validated sweep; failures mark their cell and the sweep
    continues. Results are sorted by mean validation MAPE (stable by name)."""
    if not space:
        raise ValueError("grid space is empty")
    folds = kfold_indices(train_indices, k, config.seed)
    cells = []
    for cell_index, (name, spec) in enumerate(space):
        cell = GridCell(name=name, spec=spec)
        started = time.perf_counter()
        try:
            for fold_index in range(k):
                val_fold = folds[fold_index]
                train_fold = np.concatenate([f for i, f in enumerate(folds) if i != fold_index])
                fold_config = replace(config, seed=config.seed + 1000 * cell_index + fold_index)
                checkpoint = train(dataset, train_fold, val_fold, spec, fold_config, adjacency)
                cell.fold_mapes.append(checkpoint.meta["best_val_mape"])
            cell.mean_val_mape = float(np.mean(cell.fold_mapes))
            cell.std_val_mape = float(np.std(cell.fold_mapes))
        except Exception as exc:  # keep sweeping; the cell records its failure
            cell.status = f"failed: {exc}"
        cell.train_seconds = time.perf_counter() - started
        cells.append(cell)
    cells.sort(key=lambda c: (c.mean_val_mape, c.name))
    return cells


def save_grid_csv(path, cells: list[GridCell]) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["rank", "name", "mean_val_mape", "std_val_mape", "train_seconds", "status", "spec"]
        )
        for rank, cell in enumerate(cells):
            writer.writerow(
                [
                    rank,
                    cell.name,
                    f"{cell.mean_val_mape:.6f}",
                    f"{cell.std_val_mape:.6f}",
                    f"{cell.train_seconds:.3f}",
                    cell.status,
                    json.dumps(cell.spec.to_dict(), sort_keys=True),
                ]
            )


CHECKPOINT_MAGIC = b"EGC1"
CHECKPOINT_SCHEMA_VERSION = 1


def save_checkpoint(path, checkpoint: Checkpoint) -> None:
    """Magic, length-prefixed JSON header, then raw little-endian f32 blobs."""
    manifest = [
        {"name": name, "shape": list(arr.shape)} for name, arr in checkpoint.weights.items()
    ]
    header = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "spec": checkpoint.spec.to_dict(),
        "meta": checkpoint.meta,
        "weights": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for arr in checkpoint.weights.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise CorruptCheckpointError("not a checkpoint file (bad magic)")
    if len(raw) < 8:
        raise CorruptCheckpointError("truncated checkpoint header")
    (header_len,) = struct.unpack_from("<I", raw, 4)
    try:
        header = json.loads(raw[8 : 8 + header_len])
    except json.JSONDecodeError as exc:
        raise CorruptCheckpointError("corrupt checkpoint header") from exc
    if header.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
        raise VersionMismatchError(
            f"checkpoint schema {header.get('schema_version')} != {CHECKPOINT_SCHEMA_VERSION}"
        )
    spec = ModelSpec.from_dict(header["spec"])
    offset = 8 + header_len
    weights = OrderedDict()
    for entry in header["weights"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        nbytes = count * 4
        blob = raw[offset : offset + nbytes]
        if len(blob) != nbytes:
            raise CorruptCheckpointError(f"truncated weight blob for {entry['name']}")
        weights[entry["name"]] = np.frombuffer(blob, dtype="<f4").reshape(entry["shape"]).copy()
        offset += nbytes
    if offset != len(raw):
        raise CorruptCheckpointError("trailing bytes after weight blobs")
    return Checkpoint(spec=spec, weights=weights, meta=header["meta"])
