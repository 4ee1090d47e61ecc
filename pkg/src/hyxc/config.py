"""Run configuration: flat ``section.key = value`` text files.

Values are Python literals (numbers, quoted strings, lists, booleans); a bare
word such as ``none`` is read as a string. ``#`` starts a comment.
"""

from __future__ import annotations

import ast
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .grid import Grid, InteractionKernel
from .potentials import external_potential


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SystemConfig:
    dim: int = 1
    box: tuple = ((-10.0, 10.0),)
    points: int = 201
    n_electrons: int = 2
    potential_form: str = "soft_coulomb"
    potential_charge: float = 2.0
    potential_softening: float = 1.0
    potential_omega: float = 1.0
    potential_center: tuple | None = None
    kernel_form: str = "soft_coulomb1d"
    kernel_softening: float = 1.0
    kernel_strength: float = 1.0


@dataclass(frozen=True)
class BasisConfig:
    size: int = 4
    wavevectors: object = "auto"


@dataclass(frozen=True)
class VqeSettings:
    layers: int = 2
    max_iter: int = 20000
    restarts: int = 5
    tol: float = 1e-9
    initial_step: float = 0.3
    restart_scale: float = 0.1


@dataclass(frozen=True)
class LoopConfig:
    max_iter: int = 3
    drho_tol: float = 1e-4
    energy_tol: float = 1e-6
    scf_mixing: float = 0.3
    scf_tol: float = 1e-8
    scf_max_iter: int = 500
    seed_xc: str = "none"
    hermiticity_tol: float = 1e-6
    kinetic_reference: str = "ks"
    fci_check: bool = True
    qubit_cap: int = 12
    tensor_budget: float = 1e10


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "run"
    dump_fields: bool = True
    dump_tensors: bool = True


_SECTIONS = {"system": SystemConfig, "basis": BasisConfig, "vqe": VqeSettings, "loop": LoopConfig,
             "output": OutputConfig}


@dataclass(frozen=True)
class RunConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    basis: BasisConfig = field(default_factory=BasisConfig)
    vqe: VqeSettings = field(default_factory=VqeSettings)
    loop: LoopConfig = field(default_factory=LoopConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    seed: int = 0

    def __post_init__(self):
        s, b, lp = self.system, self.basis, self.loop
        if s.dim not in (1, 3):
            raise ConfigError("system.dim must be 1 or 3")
        if len(s.box) != s.dim:
            raise ConfigError(f"system.box needs {s.dim} (a1, a2) pairs")
        if not 0 < s.n_electrons <= b.size <= lp.qubit_cap:
            raise ConfigError(f"need 0 < N <= M <= qubit cap, got N={s.n_electrons}, M={b.size}, cap={lp.qubit_cap}")
        for name in ("drho_tol", "energy_tol", "scf_tol", "hermiticity_tol"):
            if not getattr(lp, name) > 0:
                raise ConfigError(f"loop.{name} must be positive")
        if lp.kinetic_reference not in ("ks", "identity"):
            raise ConfigError("loop.kinetic_reference must be 'ks' or 'identity'")
        if not self.vqe.tol > 0:
            raise ConfigError("vqe.tol must be positive")
        if lp.max_iter < 0:
            raise ConfigError("loop.max_iter must be non-negative")

    # -- derived objects --------------------------------------------------
    def grid(self) -> Grid:
        s = self.system
        return Grid(s.dim, tuple(tuple(float(v) for v in ab) for ab in s.box), s.points)

    def kernel(self) -> InteractionKernel:
        s = self.system
        return InteractionKernel(s.kernel_form, s.kernel_softening, s.kernel_strength)

    def v_ext(self, grid: Grid | None = None):
        s = self.system
        return external_potential(grid or self.grid(), s.potential_form, s.potential_charge,
                                  s.potential_softening, s.potential_omega, s.potential_center)

    def wavevectors(self):
        from .zm import enumerate_wavevectors

        if self.basis.wavevectors == "auto":
            return enumerate_wavevectors(self.basis.size, self.system.dim)
        ks = list(self.basis.wavevectors)
        if len(ks) != self.basis.size:
            raise ConfigError(f"basis.wavevectors lists {len(ks)} vectors but basis.size = {self.basis.size}")
        return ks

    def output_dir(self) -> Path:
        return Path(self.output.directory)

    def to_dict(self) -> dict:
        return asdict(self)


def _value(text: str):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        if text.replace("_", "").replace("-", "").isalnum():
            return text
        raise ConfigError(f"cannot parse value {text!r}") from None


def _freeze(v):
    return tuple(_freeze(x) for x in v) if isinstance(v, list | tuple) else v


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse ``section.key = value`` lines on top of ``base`` (defaults if omitted)."""
    base = base or RunConfig()
    updates: dict[str, dict] = {name: {} for name in _SECTIONS}
    top: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = (t.strip() for t in line.split("=", 1))
        parts = key.split(".")
        if parts == ["seed"]:
            top["seed"] = _value(val)
            continue
        if parts[0] not in _SECTIONS or len(parts) < 2:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        name = "_".join(parts[1:])
        allowed = {f.name for f in fields(_SECTIONS[parts[0]])}
        if name not in allowed:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        updates[parts[0]][name] = _freeze(_value(val))
    try:
        sections = {n: replace(getattr(base, n), **u) for n, u in updates.items()}
        return replace(base, **sections, **top)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    return parse_config(path.read_text())
