"""Run configuration: sectioned key-value files, validation, object building.

The format is INI-style text.  Every key is typed and validated; unknown
keys, type mismatches, and cross-section incompatibilities are all collected
and reported together, naming the offending keys.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import ConfigurationError
from .grid import Grid, build_grid
from .kernels import KernelMatrix, KernelSpec, assemble
from .operators import OperatorL, PhiSpec, make_operator
from .potentials import Potential, make_potential
from .scheme import InnerSettings, SchemeConfig

_BOOL = {"true": True, "false": False, "yes": True, "no": False, "1": True, "0": False}


def _to_float(s):
    return float(s)

def _to_int(s):
    return int(s)

def _to_str(s):
    return str(s)

def _to_bool(s):
    key = s.strip().lower()
    if key not in _BOOL:
        raise ValueError(f"not a boolean: {s!r}")
    return _BOOL[key]

def _to_box(s):
    axes = [a.strip() for a in s.split("|")]
    out = []
    for axis in axes:
        parts = axis.replace(",", " ").split()
        if len(parts) != 2:
            raise ValueError(f"axis interval needs two endpoints, got {axis!r}")
        out.append((float(parts[0]), float(parts[1])))
    return tuple(out)

def _to_float_list(s):
    return [float(x) for x in s.replace(",", " ").split()]


# (converter, required, default); None default means "absent"
_SCHEMA = {
    "grid": {
        "dim": (_to_int, True, None),
        "box": (_to_box, True, None),
        "n_per_axis": (_to_int, True, None),
        "ext_radius": (_to_float, False, 0.0),
        "ext_refine": (_to_int, False, 32),
    },
    "kernel": {
        "family": (_to_str, True, None),
        "q": (_to_float, False, 2.0),
        "s": (_to_float, False, None),
        "s1": (_to_float, False, None),
        "s2": (_to_float, False, None),
        "s_in": (_to_float, False, None),
        "s_out": (_to_float, False, None),
        "rho": (_to_float, False, 1.0),
        "ellipticity": (_to_float, False, 1.0),
        "normalization": (_to_float, False, 1.0),
        "mode": (_to_str, False, None),
        "lattice_cutoff": (_to_int, False, 64),
        "inner_quad_resolution": (_to_int, False, 128),
        "eigen_count": (_to_int, False, None),
        "range_cutoff": (_to_float, False, None),
        "integrability": (_to_str, False, None),
    },
    "potential": {
        "name": (_to_str, True, None),
        "theta": (_to_float, False, 1.0),
        "theta_c": (_to_float, False, 2.0),
        "c": (_to_float, False, None),
    },
    "operator": {
        "kind": (_to_str, True, None),
        "sigma": (_to_float, False, None),
        "normalization": (_to_float, False, 1.0),
        "scale": (_to_float, False, 1.0),
    },
    "scheme": {
        "T": (_to_float, False, None),
        "n_steps": (_to_int, False, None),
        "tau": (_to_float, False, None),
        "lambda": (_to_float, True, None),
        "phi_q": (_to_float, False, 2.0),
        "phi_form": (_to_str, False, "power"),
        "mass_mode": (_to_str, False, "free"),
        "mass": (_to_float, False, None),
        "inner_tol": (_to_float, False, 1e-8),
        "max_iter": (_to_int, False, 4000),
    },
    "initial": {
        "kind": (_to_str, False, "zero"),
        "amplitude": (_to_float, False, 0.5),
        "mean": (_to_float, False, 0.0),
        "mode": (_to_int, False, 1),
    },
    "output": {
        "dir": (_to_str, False, "out"),
        "snapshot_stride": (_to_int, False, 1),
        "formats": (_to_str, False, "csv,json"),
    },
}

_DEFAULT_KERNEL_MODE = {
    "power_global": "dirichlet",
    "sum_power": "dirichlet",
    "variable_order": "dirichlet",
    "piecewise_region": "dirichlet",
    "power_regional": "regional",
    "periodic_lattice": "periodic",
    "neumann_k3": "regional",
    "spectral_neumann_k4": "regional",
}

_FREE_OPERATORS = {"laplacian_dirichlet", "fractional_dirichlet", "identity_riesz"}
_CONSERVED_OPERATORS = {"laplacian_neumann", "regional_fractional"}


@dataclass(frozen=True)
class RunConfig:
    """Validated, typed view of one run configuration."""

    sections: dict

    def __getitem__(self, key):
        return self.sections[key]

    def get(self, section, key, default=None):
        value = self.sections.get(section, {}).get(key)
        return default if value is None else value


def parse_config(text: str) -> RunConfig:
    """Parse and validate; raises ConfigurationError listing every problem."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str  # keep key case (T vs t)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"unparsable config: {exc}") from exc

    errors = []
    sections = {}
    for name in parser.sections():
        if name not in _SCHEMA:
            errors.append(f"unknown section [{name}]")
            continue
        schema = _SCHEMA[name]
        values = {}
        for key, raw in parser.items(name):
            if key not in schema:
                errors.append(f"unknown key {name}.{key}")
                continue
            conv = schema[key][0]
            raw = raw.strip()
            if raw == "":
                continue
            try:
                values[key] = conv(raw)
            except (ValueError, TypeError) as exc:
                errors.append(f"bad value for {name}.{key}: {exc}")
        sections[name] = values

    for name, schema in _SCHEMA.items():
        block = sections.setdefault(name, {})
        for key, (_, required, default) in schema.items():
            if key not in block:
                if required:
                    errors.append(f"missing required key {name}.{key}")
                block[key] = default

    errors.extend(_cross_validate(sections))
    if errors:
        raise ConfigurationError("; ".join(errors), errors=errors)
    return RunConfig(sections=sections)


def _cross_validate(sections) -> list:
    errors = []
    kernel = sections.get("kernel", {})
    operator = sections.get("operator", {})
    scheme = sections.get("scheme", {})

    family = kernel.get("family")
    mode = kernel.get("mode")
    if family is not None:
        default_mode = _DEFAULT_KERNEL_MODE.get(family)
        if default_mode is None:
            errors.append(f"kernel.family: unknown family {family!r}")
        else:
            if mode is None:
                kernel["mode"] = mode = default_mode
            elif family in ("power_global", "sum_power", "variable_order", "piecewise_region"):
                if mode != "dirichlet":
                    errors.append(
                        f"kernel.mode={mode!r} incompatible with kernel.family={family!r}"
                    )
            elif mode not in ("regional", "periodic"):
                errors.append(f"kernel.mode={mode!r} incompatible with kernel.family={family!r}")

    mass_mode = scheme.get("mass_mode", "free")
    kinds = [k.strip() for k in str(operator.get("kind", "")).split("+") if k.strip()]
    if mass_mode not in ("free", "conserved"):
        errors.append(f"scheme.mass_mode: unknown value {mass_mode!r}")
    if kinds:
        pool = _CONSERVED_OPERATORS if mass_mode == "conserved" else _FREE_OPERATORS
        for k in kinds:
            if k not in _FREE_OPERATORS | _CONSERVED_OPERATORS:
                errors.append(f"operator.kind: unknown kind {k!r}")
            elif k not in pool:
                errors.append(
                    f"operator.kind={k!r} incompatible with scheme.mass_mode={mass_mode!r}"
                )
        if any(k in ("fractional_dirichlet", "regional_fractional") for k in kinds) and (
            operator.get("sigma") is None
        ):
            errors.append("operator.sigma: required for fractional operator kinds")
    if mass_mode == "conserved" and mode == "dirichlet":
        errors.append("scheme.mass_mode=conserved incompatible with kernel.mode=dirichlet")
    if mass_mode == "free" and mode in ("regional", "periodic"):
        errors.append(f"scheme.mass_mode=free incompatible with kernel.mode={mode!r}")

    t, n_steps, tau = scheme.get("T"), scheme.get("n_steps"), scheme.get("tau")
    have = sum(v is not None for v in (t, n_steps, tau))
    if have < 2:
        errors.append("scheme: give two of T, n_steps, tau")
    elif t is not None and n_steps is not None and tau is not None:
        if abs(t / n_steps - tau) > 1e-9 * max(tau, 1.0):
            errors.append("scheme: T, n_steps, tau are mutually inconsistent")
    else:
        if tau is None:
            scheme["tau"] = t / n_steps
        elif t is None:
            scheme["T"] = tau * n_steps
        else:
            n = t / tau
            if abs(n - round(n)) > 1e-9:
                errors.append("scheme: T / tau is not an integer number of steps")
            else:
                scheme["n_steps"] = int(round(n))

    pot = sections.get("potential", {})
    if pot.get("name") not in (None, "quartic", "obstacle", "logarithmic", "zero", "linear_gamma"):
        errors.append(f"potential.name: unknown potential {pot.get('name')!r}")
    return errors


# ---------------------------------------------------------------------------
# object building


def kernel_spec_from_config(cfg: RunConfig) -> KernelSpec:
    k = cfg["kernel"]
    grid_cfg = cfg["grid"]
    return KernelSpec(
        family=k["family"],
        q=k["q"],
        s=k["s"],
        s1=k["s1"],
        s2=k["s2"],
        s_in=k["s_in"],
        s_out=k["s_out"],
        lattice_cutoff=k["lattice_cutoff"],
        inner_quad_resolution=k["inner_quad_resolution"],
        eigen_count=k["eigen_count"],
        normalization=k["normalization"],
        rho=k["rho"],
        Lambda=k["ellipticity"],
        range_cutoff=k["range_cutoff"],
        box=grid_cfg["box"],
    )


def build_grid_from_config(cfg: RunConfig) -> Grid:
    g = cfg["grid"]
    return build_grid(g["dim"], g["box"], g["n_per_axis"], g["ext_radius"], g["ext_refine"])


def build_potential_from_config(cfg: RunConfig) -> Potential:
    p = cfg["potential"]
    if p["name"] == "logarithmic":
        return make_potential("logarithmic", theta=p["theta"], theta_c=p["theta_c"], c=p["c"])
    return make_potential(p["name"])


def build_operator_from_config(cfg: RunConfig, grid: Grid, scheme_kernel: Optional[KernelMatrix]) -> OperatorL:
    op = cfg["operator"]
    kinds = [k.strip() for k in op["kind"].split("+")]
    parts = []
    for kind in kinds:
        if kind == "fractional_dirichlet":
            spec = KernelSpec(
                family="power_global",
                q=2.0,
                s=op["sigma"],
                normalization=op["normalization"],
                box=cfg["grid"]["box"],
            )
            km = assemble(spec, grid, "dirichlet")
            parts.append(make_operator(kind, grid, kernel=km, scale=op["scale"]))
        elif kind == "regional_fractional":
            if scheme_kernel is None:
                raise ConfigurationError("regional_fractional operator needs the scheme kernel")
            base = scheme_kernel.spec
            spec = replace(base, s=op["sigma"], q=2.0, normalization=op["normalization"])
            km = assemble(spec, grid, scheme_kernel.mode)
            parts.append(make_operator(kind, grid, kernel=km, scale=op["scale"]))
        else:
            parts.append(make_operator(kind, grid, scale=op["scale"]))
    if len(parts) == 1:
        return parts[0]
    return make_operator("sum", grid, parts=parts)


def build_initial_from_config(cfg: RunConfig, grid: Grid, rng: np.random.Generator) -> np.ndarray:
    ini = cfg["initial"]
    kind = ini["kind"]
    x = grid.nodes
    if kind == "zero":
        return np.zeros(grid.n_nodes)
    if kind == "constant":
        return np.full(grid.n_nodes, ini["mean"])
    if kind in ("sine", "cosine"):
        trig = np.sin if kind == "sine" else np.cos
        u = np.ones(grid.n_nodes)
        for k, (a, b) in enumerate(grid.box):
            u = u * trig(ini["mode"] * np.pi * (x[:, k] - a) / (b - a))
        return ini["mean"] + ini["amplitude"] * u
    if kind == "random":
        u = ini["mean"] + ini["amplitude"] * rng.uniform(-1.0, 1.0, grid.n_nodes)
        if cfg["scheme"]["mass_mode"] == "conserved":
            u = u + (ini["mean"] - grid.mean(u))
        return u
    raise ConfigurationError(f"initial.kind: unknown kind {kind!r}")


def build_all(cfg: RunConfig, rng: Optional[np.random.Generator] = None):
    """Construct (grid, kernel matrix, potential, operator, scheme config,
    initial datum) from a validated RunConfig."""
    rng = rng or np.random.default_rng(0)
    grid = build_grid_from_config(cfg)
    spec = kernel_spec_from_config(cfg)
    km = assemble(spec, grid, cfg["kernel"]["mode"])
    potential = build_potential_from_config(cfg)
    opl = build_operator_from_config(cfg, grid, km)
    s = cfg["scheme"]
    phi = PhiSpec(form=s["phi_form"], q=s["phi_q"])
    u0 = build_initial_from_config(cfg, grid, rng)
    mass = s["mass"]
    if s["mass_mode"] == "conserved" and mass is None:
        mass = grid.mean(u0)
    scheme_cfg = SchemeConfig(
        T=s["T"],
        n_steps=s["n_steps"],
        lam=s["lambda"],
        phi=phi,
        kernel=km,
        opL=opl,
        potential=potential,
        mass_mode=s["mass_mode"],
        mass=mass,
        inner=InnerSettings(tol=s["inner_tol"], max_iter=s["max_iter"]),
    )
    return grid, km, potential, opl, scheme_cfg, u0
