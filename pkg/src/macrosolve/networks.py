"""MLP and KAN function approximators over a flat parameter vector.

A network's trainable scalars live in one 1-D float64 tensor; ``layout``
describes how that vector splits into per-layer arrays. Keeping the
parameters flat lets every learnable variable of a model share one vector
that the optimizers update jointly.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

CHECKPOINT_FORMAT = "macrosolve-checkpoint/1"

ACTIVATIONS = ("tanh", "sigmoid", "relu", "silu")
TRANSFORMS = ("none", "softplus", "exp")
INITS = ("xavier", "fan_in")


class CheckpointError(ValueError):
    pass


def silu(x: torch.Tensor) -> torch.Tensor:
    return x * torch.sigmoid(x)


def relu(x: torch.Tensor) -> torch.Tensor:
    return torch.clamp(x, min=0.0)


def softplus(x: torch.Tensor) -> torch.Tensor:
    return F.softplus(x)


_ACT = {"tanh": torch.tanh, "sigmoid": torch.sigmoid, "relu": relu, "silu": silu}
_OUT = {"none": lambda x: x, "softplus": softplus, "exp": torch.exp}


@dataclass(frozen=True)
class NetworkSpec:
    input_names: tuple[str, ...]
    kind: str = "mlp"
    hidden_sizes: tuple[int, ...] = (30, 30, 30, 30)
    activation: str = "tanh"
    output_transform: str = "none"
    grid_size: int = 5
    spline_order: int = 3
    grid_range: tuple[float, float] = (-1.0, 1.0)
    init: str = "xavier"

    def __post_init__(self):
        object.__setattr__(self, "input_names", tuple(self.input_names))
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        object.__setattr__(self, "grid_range", tuple(float(g) for g in self.grid_range))
        if self.kind not in ("mlp", "kan"):
            raise ValueError(f"network kind must be 'mlp' or 'kan', got {self.kind!r}")
        if not self.input_names:
            raise ValueError("a network needs at least one input")
        if not self.hidden_sizes or any(h < 1 for h in self.hidden_sizes):
            raise ValueError(f"hidden_sizes must be non-empty positive integers, got {self.hidden_sizes}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        if self.output_transform not in TRANSFORMS:
            raise ValueError(f"output_transform must be one of {TRANSFORMS}, got {self.output_transform!r}")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}, got {self.init!r}")
        if self.grid_size < 1 or self.spline_order < 1:
            raise ValueError("grid_size and spline_order must be positive")
        lo, hi = self.grid_range
        if not lo < hi:
            raise ValueError(f"grid_range must satisfy low < high, got {self.grid_range}")

    @property
    def widths(self) -> list[int]:
        return [len(self.input_names), *self.hidden_sizes, 1]

    @property
    def n_basis(self) -> int:
        return self.grid_size + self.spline_order


def layout(spec: NetworkSpec) -> list[tuple[str, tuple[int, ...]]]:
    """Named array shapes in flat-vector order."""
    shapes = []
    widths = spec.widths
    for l, (i, o) in enumerate(zip(widths, widths[1:])):
        if spec.kind == "mlp":
            shapes += [(f"layer{l}.weight", (o, i)), (f"layer{l}.bias", (o,))]
        else:
            shapes += [(f"layer{l}.base_weight", (o, i)), (f"layer{l}.spline_coef", (o, i, spec.n_basis))]
    return shapes


def param_count(spec: NetworkSpec) -> int:
    return sum(math.prod(shape) for _, shape in layout(spec))


def _split(spec: NetworkSpec, params: torch.Tensor) -> dict[str, torch.Tensor]:
    arrays = {}
    offset = 0
    for name, shape in layout(spec):
        n = math.prod(shape)
        arrays[name] = params[offset : offset + n].view(shape)
        offset += n
    return arrays


def init_params(spec: NetworkSpec, generator: torch.Generator) -> torch.Tensor:
    """Random initial parameters.

    ``xavier``: MLP weights Xavier-uniform, biases zero. ``fan_in``: MLP
    weights and biases uniform in +-1/sqrt(fan_in). KAN base weights are
    always Xavier-uniform and spline coefficients small Gaussians.
    """
    chunks = []
    for name, shape in layout(spec):
        fan_in = spec.widths[int(name.split(".")[0][5:])]
        if name.endswith("spline_coef"):
            chunks.append(0.1 * torch.randn(shape, generator=generator, dtype=torch.float64))
            continue
        if name.endswith("weight") and (spec.kind == "kan" or spec.init == "xavier"):
            bound = math.sqrt(6.0 / (fan_in + shape[0]))
        elif spec.init == "xavier":
            chunks.append(torch.zeros(shape, dtype=torch.float64))
            continue
        else:
            bound = 1.0 / math.sqrt(fan_in)
        chunks.append((2.0 * torch.rand(shape, generator=generator, dtype=torch.float64) - 1.0) * bound)
    return torch.cat([c.reshape(-1) for c in chunks])


def bspline_basis(x: torch.Tensor, grid_size: int, order: int, grid_range: tuple[float, float]) -> torch.Tensor:
    """B-spline basis of the given order on a uniform extended grid.

    ``x`` has any shape; the result appends a trailing axis of
    ``grid_size + order`` basis values. The basis sums to one on the
    interior of ``grid_range`` and is zero far outside it.
    """
    lo, hi = grid_range
    h = (hi - lo) / grid_size
    knots = lo + h * torch.arange(-order, grid_size + order + 1, dtype=x.dtype)
    x = x.unsqueeze(-1)
    bases = ((x >= knots[:-1]) & (x < knots[1:])).to(x.dtype)
    for k in range(1, order + 1):
        left = (x - knots[: -(k + 1)]) / (knots[k:-1] - knots[: -(k + 1)])
        right = (knots[k + 1 :] - x) / (knots[k + 1 :] - knots[1:-k])
        bases = left * bases[..., :-1] + right * bases[..., 1:]
    return bases


def forward(spec: NetworkSpec, params: torch.Tensor, X: torch.Tensor) -> torch.Tensor:
    """Evaluate the network on a (B, d) batch; returns a length-B tensor."""
    if X.dim() != 2 or X.shape[1] != len(spec.input_names):
        raise ValueError(f"expected a (B, {len(spec.input_names)}) batch, got shape {tuple(X.shape)}")
    if params.numel() != param_count(spec):
        raise ValueError(f"expected {param_count(spec)} parameters, got {params.numel()}")
    arrays = _split(spec, params)
    h = X
    n_layers = len(spec.widths) - 1
    for l in range(n_layers):
        if spec.kind == "mlp":
            h = h @ arrays[f"layer{l}.weight"].T + arrays[f"layer{l}.bias"]
            if l < n_layers - 1:
                h = _ACT[spec.activation](h)
        else:
            basis = bspline_basis(h, spec.grid_size, spec.spline_order, spec.grid_range)
            h = silu(h) @ arrays[f"layer{l}.base_weight"].T + torch.einsum(
                "bik,oik->bo", basis, arrays[f"layer{l}.spline_coef"]
            )
    return _OUT[spec.output_transform](h[:, 0])


@dataclass
class NetworkState:
    spec: NetworkSpec
    params: torch.Tensor = field(repr=False)

    @classmethod
    def init(cls, spec: NetworkSpec, seed: int | torch.Generator) -> "NetworkState":
        gen = seed if isinstance(seed, torch.Generator) else torch.Generator().manual_seed(seed)
        return cls(spec, init_params(spec, gen))

    def __call__(self, X: torch.Tensor) -> torch.Tensor:
        return forward(self.spec, self.params, X)

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.detach().numpy().copy() for k, v in _split(self.spec, self.params).items()}


def spec_to_dict(spec: NetworkSpec) -> dict:
    d = asdict(spec)
    d["input_names"] = list(spec.input_names)
    d["hidden_sizes"] = list(spec.hidden_sizes)
    d["grid_range"] = list(spec.grid_range)
    return d


def spec_from_dict(d: dict) -> NetworkSpec:
    return NetworkSpec(**d)


def _encode(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def state_to_dict(state: NetworkState) -> dict:
    return {
        "spec": spec_to_dict(state.spec),
        "arrays": {k: {"shape": list(a.shape), "data": _encode(a)} for k, a in state.arrays().items()},
    }


def state_from_dict(d: dict) -> NetworkState:
    try:
        spec = spec_from_dict(d["spec"])
        chunks = []
        for name, shape in layout(spec):
            entry = d["arrays"][name]
            if tuple(entry["shape"]) != shape:
                raise CheckpointError(f"array {name!r} has shape {entry['shape']}, expected {list(shape)}")
            raw = base64.b64decode(entry["data"], validate=True)
            if len(raw) != 8 * math.prod(shape):
                raise CheckpointError(f"array {name!r} holds {len(raw)} bytes, expected {8 * math.prod(shape)}")
            chunks.append(np.frombuffer(raw, dtype="<f8"))
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed network payload: {exc}") from exc
    flat = np.concatenate(chunks) if chunks else np.zeros(0)
    return NetworkState(spec, torch.from_numpy(flat.astype(np.float64)))


def serialize(state: NetworkState) -> bytes:
    doc = {"format": CHECKPOINT_FORMAT, "networks": {"net": state_to_dict(state)}}
    return json.dumps(doc, indent=1).encode()


def deserialize(payload: bytes) -> NetworkState:
    try:
        doc = json.loads(payload)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"checkpoint is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError("missing or unsupported checkpoint format tag")
    try:
        (entry,) = doc["networks"].values()
    except (KeyError, ValueError, AttributeError) as exc:
        raise CheckpointError("expected exactly one network in the payload") from exc
    return state_from_dict(entry)
