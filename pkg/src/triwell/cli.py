"""Command-line driver: config parsing, subcommands and CSV/JSON output.

Configuration is a plain ``key = value`` file; ``#`` starts a comment.
Every key has a default, listed by ``triwell --help``; a config file must
name the model and, for the polynomial and square models, spell out the
potential parameters.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import re
import sys
from dataclasses import dataclass, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import mpmath
import numpy as np

from . import __version__
from .potential import PolynomialPotential, SquareWellSpec

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2
MODELS = ("poly", "square", "threelevel")
SUBCOMMANDS = (
    "poly-spectrum",
    "poly-splitting",
    "husimi",
    "square-exact",
    "square-semiclassical",
    "three-level",
    "verify",
)
SUBCOMMAND_MODEL = {
    "poly-spectrum": "poly",
    "poly-splitting": "poly",
    "husimi": "poly",
    "square-exact": "square",
    "square-semiclassical": "square",
    "three-level": "threelevel",
    "verify": None,
}
REQUIRED_KEYS = {
    "poly": ("a", "b"),
    "square": ("a", "b", "c", "v_max", "v_min"),
    "threelevel": (),
}
MODEL_DEFAULTS = {
    "poly": dict(a=1.5, b=0.6, inv_hbar_min=5.0, inv_hbar_max=12.0),
    "square": dict(a=0.55, b=1.25, c=1.75, v_max=1.0, v_min=-1.82, inv_hbar_min=6.0, inv_hbar_max=16.0),
    "threelevel": dict(inv_hbar_min=8.0, inv_hbar_max=11.0),
}
# below this the doublet splitting is within a couple of decades of the
# accuracy of the individual levels from the oscillator basis
SPLITTING_WARN = 1e-9


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line, self.column = line, column
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(where + message)


@dataclass
class RunConfig:
    model: str = "poly"
    a: float = 1.5
    b: float = 0.6
    c: float = 1.75
    v_max: float = 1.0
    v_min: float = -1.82
    inv_hbar_min: float = 5.0
    inv_hbar_max: float = 12.0
    points: int = 200
    n_levels: int = 20
    doublet: int = 0
    trunc_tol: float = 1e-9
    root_tol: float = 1e-13
    dps: int = 0
    husimi_inv_hbar: tuple = (8.14, 8.184, 8.24)
    husimi_levels: tuple = (5, 6, 7)
    q_min: float = -2.2
    q_max: float = 2.2
    p_min: float = -3.2
    p_max: float = 3.2
    n_q: int = 256
    n_p: int = 256
    convention: str = "qp"
    omega_l: float = 5.833
    omega_c: float = 3.656
    n_lateral: int = 0
    m_central: int = 5
    v0: float = -1.8225
    alpha: float = 0.197
    action: float = 0.34
    output: str = "out"

    def validate(self) -> "RunConfig":
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {', '.join(MODELS)}, got {self.model!r}")
        if not 0 < self.inv_hbar_min < self.inv_hbar_max:
            raise ConfigError("need 0 < inv_hbar_min < inv_hbar_max")
        if self.points < 1:
            raise ConfigError("points must be at least 1")
        if self.n_levels < 0 or self.doublet < 0:
            raise ConfigError("n_levels and doublet must be non-negative")
        if self.trunc_tol <= 0 or self.root_tol <= 0:
            raise ConfigError("tolerances must be positive")
        if self.dps < 0:
            raise ConfigError("dps must be >= 0 (0 means double precision)")
        if self.convention not in ("qp", "pq"):
            raise ConfigError("convention must be qp or pq")
        if not (self.q_min < self.q_max and self.p_min < self.p_max and self.n_q > 1 and self.n_p > 1):
            raise ConfigError("husimi window must be non-empty with at least 2 points per axis")
        if any(x <= 0 for x in self.husimi_inv_hbar) or any(k < 0 for k in self.husimi_levels):
            raise ConfigError("husimi_inv_hbar must be positive and husimi_levels non-negative")
        try:
            if self.model == "poly":
                PolynomialPotential(self.a, self.b)
            elif self.model == "square":
                SquareWellSpec(self.a, self.b, self.c, self.v_max, self.v_min)
            else:
                self.three_level_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def grid(self) -> np.ndarray:
        if self.points == 1:
            return np.array([self.inv_hbar_min])
        return np.linspace(self.inv_hbar_min, self.inv_hbar_max, self.points)

    def polynomial(self) -> PolynomialPotential:
        return PolynomialPotential(self.a, self.b)

    def square(self) -> SquareWellSpec:
        return SquareWellSpec(self.a, self.b, self.c, self.v_max, self.v_min)

    def three_level_params(self):
        from .threelevel import ThreeLevelParams

        return ThreeLevelParams(
            self.omega_l, self.omega_c, self.n_lateral, self.m_central, self.v0, self.alpha, self.action
        )

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


_FIELDS = {f.name: f for f in fields(RunConfig)}
_NUMBER = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_INT = re.compile(r"[+-]?\d+")
_KEY = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def _field_kind(name: str) -> str:
    default = _FIELDS[name].default
    if isinstance(default, bool):
        return "bool"
    if isinstance(default, int):
        return "int"
    if isinstance(default, float):
        return "float"
    if isinstance(default, tuple):
        return "ints" if all(isinstance(x, int) for x in default) else "floats"
    return "str"


def _parse_value(name: str, raw: str, line: int, col: int):
    kind = _field_kind(name)
    if kind in ("floats", "ints"):
        items, out, offset = raw.split(","), [], 0
        for item in items:
            lead = len(item) - len(item.lstrip())
            out.append(_parse_scalar(kind[:-1], item.strip(), line, col + offset + lead, name))
            offset += len(item) + 1
        return tuple(out)
    return _parse_scalar(kind, raw, line, col, name)


def _parse_scalar(kind: str, text: str, line: int, col: int, name: str):
    if kind == "str":
        if not text:
            raise ConfigError(f"empty value for {name}", line, col)
        return text
    pattern = _INT if kind == "int" else _NUMBER
    if not pattern.fullmatch(text):
        raise ConfigError(f"{name} expects {'an integer' if kind == 'int' else 'a number'}, got {text!r}", line, col)
    return int(text) if kind == "int" else float(text)


def parse_config(text: str) -> RunConfig:
    """Strict key = value parser; raises ConfigError with line and column."""
    values: dict[str, Any] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        body = raw_line.split("#", 1)[0]
        if not body.strip():
            continue
        if "=" not in body:
            col = len(body) - len(body.lstrip()) + 1
            raise ConfigError("expected key = value", lineno, col)
        key_part, value_part = body.split("=", 1)
        key = key_part.strip()
        key_col = len(key_part) - len(key_part.lstrip()) + 1
        if not _KEY.fullmatch(key):
            raise ConfigError(f"malformed key {key!r}", lineno, key_col)
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r}", lineno, key_col)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno, key_col)
        value = value_part.strip()
        value_col = len(key_part) + 2 + (len(value_part) - len(value_part.lstrip()))
        values[key] = _parse_value(key, value, lineno, value_col)

    if "model" not in values:
        raise ConfigError("missing required key 'model'")
    model = values["model"]
    if model not in MODELS:
        raise ConfigError(f"model must be one of {', '.join(MODELS)}, got {model!r}")
    missing = [k for k in REQUIRED_KEYS[model] if k not in values]
    if missing:
        raise ConfigError(f"model {model} requires {', '.join(missing)}")
    merged = {**MODEL_DEFAULTS[model], **values}
    return RunConfig(**merged).validate()


def render_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            text = ", ".join(repr(x) for x in v)
        elif isinstance(v, float):
            text = repr(v)
        else:
            text = str(v)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"


def default_config(model: str = "poly") -> RunConfig:
    return RunConfig(model=model, **MODEL_DEFAULTS[model]).validate()


# --- output --------------------------------------------------------------------


def _row_dict(record) -> dict:
    if dataclasses.is_dataclass(record):
        return dataclasses.asdict(record)
    return dict(record)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


class OutputWriter:
    """Writes files under one directory and can remove them all on failure."""

    def __init__(self, directory: Path, config: RunConfig, subcommand: str):
        self.directory = Path(directory)
        self.config = config
        self.subcommand = subcommand
        self.written: list[Path] = []

    def _path(self, name: str) -> Path:
        return self.directory / name

    def _register(self, path: Path) -> Path:
        self.written.append(path)
        return path

    def csv(self, name: str, records: Sequence, columns: Optional[Sequence[str]] = None, meta=None) -> Path:
        path = self._register(self._path(name))
        write_outputs(records, "csv", path, columns)
        sidecar = self._register(path.with_suffix(".json"))
        write_outputs(
            [self.sidecar(columns or (list(_row_dict(records[0])) if records else []), meta)],
            "json",
            sidecar,
        )
        return path

    def json(self, name: str, payload) -> Path:
        path = self._register(self._path(name))
        write_outputs([payload], "json", path)
        return path

    def text(self, name: str, body: str) -> Path:
        path = self._register(self._path(name))
        try:
            path.write_text(body, encoding="utf-8", newline="\n")
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        return path

    def sidecar(self, columns, meta=None) -> dict:
        return {
            "tool": "triwell",
            "version": __version__,
            "subcommand": self.subcommand,
            "created": datetime.now(timezone.utc).isoformat(),
            "columns": list(columns),
            "config": self.config.as_dict(),
            "metadata": meta or {},
        }

    def cleanup(self) -> None:
        for path in self.written:
            try:
                path.unlink()
            except FileNotFoundError:
                pass
        self.written.clear()


def write_outputs(records: Sequence, format: str, path, columns: Optional[Sequence[str]] = None) -> Path:
    """Write homogeneous records as CSV (17 significant digits, LF) or JSON."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if format == "csv":
            rows = [_row_dict(r) for r in records]
            cols = list(columns) if columns is not None else (list(rows[0]) if rows else [])
            for r in rows:
                if set(r) != set(cols):
                    raise ValueError(f"record keys {sorted(r)} differ from columns {cols}")
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(cols)
            for r in rows:
                w.writerow([_fmt(r[c]) for c in cols])
            path.write_text(buf.getvalue(), encoding="utf-8", newline="\n")
        elif format == "json":
            payload = records[0] if len(records) == 1 else [_row_dict(r) for r in records]
            path.write_text(
                json.dumps(payload, indent=2, default=_json_default) + "\n", encoding="utf-8", newline="\n"
            )
        else:
            raise ValueError(f"format must be csv or json, got {format!r}")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if dataclasses.is_dataclass(o):
        return dataclasses.asdict(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


PLOT_TEMPLATE = '''"""Plot {csv_name}; generated by triwell {subcommand}."""
import csv
import sys

import matplotlib.pyplot as plt

with open("{csv_name}", newline="") as fh:
    rows = list(csv.DictReader(fh))

{body}
plt.tight_layout()
plt.savefig("{png_name}", dpi=150)
if "--show" in sys.argv:
    plt.show()
'''


def plot_script(csv_name: str, subcommand: str, body: str) -> str:
    return PLOT_TEMPLATE.format(
        csv_name=csv_name, subcommand=subcommand, png_name=Path(csv_name).with_suffix(".png").name, body=body
    )


# --- subcommands -------------------------------------------------------------


def run_poly_spectrum(cfg: RunConfig, out: OutputWriter, args) -> None:
    from .spectral import sweep_hbar

    sweep = sweep_hbar(cfg.polynomial(), cfg.grid(), cfg.n_levels, cfg.trunc_tol, cfg.doublet, args.threads)
    _fail_on_point_errors(sweep)
    rows = []
    for pt in sweep:
        sp = pt.spectrum
        for k in range(len(sp.energies)):
            rows.append(
                dict(
                    inv_hbar=pt.inv_hbar,
                    level=k,
                    energy=sp.energies[k],
                    parity=int(sp.parity[k]),
                    lateral_overlap=sp.lateral_overlap[k],
                    central_overlap=sp.central_overlap[k],
                )
            )
    out.csv("poly_spectrum.csv", rows)
    out.text(
        "plot_poly_spectrum.py",
        plot_script(
            "poly_spectrum.csv",
            "poly-spectrum",
            "x = [float(r['inv_hbar']) for r in rows]\n"
            "e = [float(r['energy']) for r in rows]\n"
            "c = ['tab:blue' if r['parity'] == '1' else 'tab:red' for r in rows]\n"
            "plt.scatter(x, e, s=2, c=c)\n"
            "plt.xlabel('1/hbar'); plt.ylabel('E')\n",
        ),
    )


def _fail_on_point_errors(sweep) -> None:
    bad = [pt for pt in sweep if not pt.ok]
    if bad:
        raise RuntimeError(f"{len(bad)} sweep point(s) failed, first at 1/hbar={bad[0].inv_hbar}: {bad[0].error}")


def run_poly_splitting(cfg: RunConfig, out: OutputWriter, args) -> None:
    from .spectral import detect_avoided_crossings, detect_spikes, sweep_hbar

    pot = cfg.polynomial()
    grid = cfg.grid()
    sweep = sweep_hbar(pot, grid, cfg.n_levels, cfg.trunc_tol, cfg.doublet, args.threads)
    _fail_on_point_errors(sweep)
    spikes = detect_spikes(sweep.inv_hbar, sweep.splittings()) if len(grid) > 2 else []
    crossings = detect_avoided_crossings(sweep) if len(grid) > 2 else []
    points = list(sweep.points)
    if args.refine_resonances and spikes:
        step = grid[1] - grid[0]
        extra = []
        for s in spikes:
            local = np.linspace(s.inv_hbar - step, s.inv_hbar + step, 21)[1:-1]
            local = local[~np.isin(local, grid)]
            extra.extend(sweep_hbar(pot, local, cfg.n_levels, cfg.trunc_tol, cfg.doublet, args.threads).points)
        points = sorted(points + extra, key=lambda p: p.inv_hbar)
    spike_x = np.array([s.inv_hbar for s in spikes])
    half = (grid[1] - grid[0]) if len(grid) > 1 else 0.0
    rows = []
    for pt in points:
        if not pt.ok:
            raise RuntimeError(f"refinement point 1/hbar={pt.inv_hbar} failed: {pt.error}")
        d = pt.doublet
        flag = bool(spike_x.size and np.min(np.abs(spike_x - pt.inv_hbar)) <= half + 1e-12)
        rows.append(dict(inv_hbar=pt.inv_hbar, e_plus=d.e_plus, e_minus=d.e_minus, delta_e=d.splitting, resonance_flag=flag))
    small = [r["inv_hbar"] for r in rows if r["delta_e"] < SPLITTING_WARN]
    if small:
        print(
            f"warning: splitting below {SPLITTING_WARN:g} at {len(small)} point(s) from 1/hbar={small[0]:.4g}; "
            "values there approach the accuracy of the individual levels",
            file=sys.stderr,
        )
    out.csv("poly_splitting.csv", rows, ["inv_hbar", "e_plus", "e_minus", "delta_e", "resonance_flag"])
    out.json(
        "poly_resonances.json",
        {
            "spikes": [dataclasses.asdict(s) for s in spikes],
            "avoided_crossings": [dataclasses.asdict(c) for c in crossings],
        },
    )
    out.text(
        "plot_poly_splitting.py",
        plot_script(
            "poly_splitting.csv",
            "poly-splitting",
            "x = [float(r['inv_hbar']) for r in rows]\n"
            "y = [float(r['delta_e']) for r in rows]\n"
            "plt.semilogy(x, y)\n"
            "plt.xlabel('1/hbar'); plt.ylabel('splitting')\n",
        ),
    )


def run_husimi(cfg: RunConfig, out: OutputWriter, args) -> None:
    from .oscbasis import converged_hamiltonian
    from .spectral import diagonalize

    pot = cfg.polynomial()
    # every listed level at every listed 1/hbar, one grid per panel
    for x in cfg.husimi_inv_hbar:
        hbar = 1.0 / x
        top = max(cfg.husimi_levels) + 1
        H = converged_hamiltonian(pot, hbar, max(cfg.n_levels, top), cfg.trunc_tol)
        spec = diagonalize(H, keep=top, convention=cfg.convention)
        for level in cfg.husimi_levels:
            _husimi_panel(cfg, out, spec, x, level)


def _husimi_panel(cfg: RunConfig, out: OutputWriter, spec, x: float, level: int) -> None:
    from .husimi import husimi_map

    grid = husimi_map(
        spec.vectors[:, level],
        spec.hbar,
        (cfg.q_min, cfg.q_max),
        (cfg.p_min, cfg.p_max),
        cfg.n_q,
        cfg.n_p,
        convention=cfg.convention,
        level_index=level,
    )
    Q, P = np.meshgrid(grid.q_axis, grid.p_axis, indexing="ij")
    rows = [dict(q=q, p=p, value=v) for q, p, v in zip(Q.ravel(), P.ravel(), grid.values.ravel())]
    name = f"husimi_x{x:g}_n{level}.csv"
    out.csv(
        name,
        rows,
        ["q", "p", "value"],
        meta=dict(
            inv_hbar=x,
            level=level,
            energy=float(spec.energies[level]),
            parity=int(spec.parity[level]),
            convention=cfg.convention,
            normalization=grid.normalization(),
            n_q=cfg.n_q,
            n_p=cfg.n_p,
        ),
    )
    out.text(
        f"plot_{Path(name).stem}.py",
        plot_script(
            name,
            "husimi",
            f"nq, np_ = {cfg.n_q}, {cfg.n_p}\n"
            "v = [float(r['value']) for r in rows]\n"
            "q = [float(r['q']) for r in rows][::np_]\n"
            "p = [float(r['p']) for r in rows][:np_]\n"
            "z = [[v[i * np_ + j] for i in range(nq)] for j in range(np_)]\n"
            "plt.contourf(q, p, z, 30)\n"
            "plt.xlabel('q'); plt.ylabel('p')\n",
        ),
    )


def _dps(cfg: RunConfig) -> Optional[int]:
    return cfg.dps or None


def run_square_exact(cfg: RunConfig, out: OutputWriter, args) -> None:
    from .transfer import exact_peak, exact_splitting, locate_resonances

    spec = cfg.square()
    grid = list(cfg.grid())
    extra = []
    if args.refine_resonances:
        # resonance peaks are far narrower than any practical grid step; add each maximum
        for r in locate_resonances(spec, (cfg.inv_hbar_min, cfg.inv_hbar_max), cfg.doublet):
            lo = max(cfg.inv_hbar_min, r.inv_hbar - 0.05)
            hi = min(cfg.inv_hbar_max, r.inv_hbar + 0.05)
            # double precision resolves the peak up to 1/hbar ~ 14
            dps = _dps(cfg) or (None if r.inv_hbar < 14 else 40)
            extra.append((exact_peak(spec, (lo, hi), cfg.doublet, dps)[0], dps))
    rows = []
    for x, dps in sorted([(x, _dps(cfg)) for x in grid] + extra):
        hbar = 1.0 / x if dps is None else 1 / mpmath.mpf(x)
        d = exact_splitting(spec, hbar, cfg.doublet, dps)
        rows.append(
            dict(inv_hbar=x, e_n=float(d.e_n), e_plus=float(d.e_plus), e_minus=float(d.e_minus), delta_e=float(d.splitting))
        )
    out.csv("square_exact.csv", rows, ["inv_hbar", "e_n", "e_plus", "e_minus", "delta_e"])
    out.text(
        "plot_square_exact.py",
        plot_script(
            "square_exact.csv",
            "square-exact",
            "x = [float(r['inv_hbar']) for r in rows]\n"
            "plt.semilogy(x, [float(r['delta_e']) for r in rows], 'k')\n"
            "plt.xlabel('1/hbar'); plt.ylabel('splitting')\n",
        ),
    )


def run_square_semiclassical(cfg: RunConfig, out: OutputWriter, args) -> None:
    from .transfer import locate_resonances, resonance_peak_height, semiclassical_splitting

    spec = cfg.square()
    rows = []
    for x in cfg.grid():
        s = semiclassical_splitting(spec, 1.0 / x, cfg.doublet, _dps(cfg))
        rows.append(
            dict(inv_hbar=x, e_n=s.e_n, delta_e_eq37=s.first_order, peak_bound=s.peak_bound, used_formula=s.used_formula)
        )
    peaks = []
    for r in locate_resonances(spec, (cfg.inv_hbar_min, cfg.inv_hbar_max), cfg.doublet):
        h = resonance_peak_height(spec, 1.0 / r.inv_hbar, cfg.doublet, r.parity, _dps(cfg))
        peaks.append(dict(inv_hbar_star=r.inv_hbar, intruder_parity=r.parity, e_n=r.e_n, peak_height=float(h)))
    out.csv("square_semiclassical.csv", rows, ["inv_hbar", "e_n", "delta_e_eq37", "peak_bound", "used_formula"])
    out.csv("square_peaks.csv", peaks, ["inv_hbar_star", "intruder_parity", "e_n", "peak_height"])
    out.text(
        "plot_square_semiclassical.py",
        plot_script(
            "square_semiclassical.csv",
            "square-semiclassical",
            "x = [float(r['inv_hbar']) for r in rows]\n"
            "plt.semilogy(x, [float(r['delta_e_eq37']) for r in rows], 'r')\n"
            "with open('square_peaks.csv', newline='') as fh:\n"
            "    pk = list(csv.DictReader(fh))\n"
            "plt.semilogy([float(r['inv_hbar_star']) for r in pk], [float(r['peak_height']) for r in pk], 'go')\n"
            "plt.xlabel('1/hbar'); plt.ylabel('splitting')\n",
        ),
    )


def run_three_level(cfg: RunConfig, out: OutputWriter, args) -> None:
    from .threelevel import crossing_inv_hbar, sweep_three_level

    params = cfg.three_level_params()
    rows = sweep_three_level(params, cfg.grid())
    out.csv(
        "three_level.csv",
        rows,
        ["inv_hbar", "e1", "e2", "e3", "doublet_splitting", "regime"],
        meta=dict(crossing_inv_hbar=crossing_inv_hbar(params)),
    )
    out.text(
        "plot_three_level.py",
        plot_script(
            "three_level.csv",
            "three-level",
            "x = [float(r['inv_hbar']) for r in rows]\n"
            "for k in ('e1', 'e2', 'e3'):\n"
            "    plt.plot(x, [float(r[k]) for r in rows], label=k)\n"
            "plt.legend(); plt.xlabel('1/hbar'); plt.ylabel('E')\n",
        ),
    )


def run_verify(cfg: RunConfig, out: OutputWriter, args) -> bool:
    from .verify import run_checks

    results = run_checks()
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}  {r.detail}")
    passed = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} checks passed")
    return passed


RUNNERS: dict[str, Callable] = {
    "poly-spectrum": run_poly_spectrum,
    "poly-splitting": run_poly_splitting,
    "husimi": run_husimi,
    "square-exact": run_square_exact,
    "square-semiclassical": run_square_semiclassical,
    "three-level": run_three_level,
    "verify": run_verify,
}


def _help_epilog() -> str:
    lines = ["config keys and defaults (poly / square / threelevel sweep ranges differ):"]
    for f in fields(RunConfig):
        lines.append(f"  {f.name} = {f.default}")
    lines.append("model-specific defaults: " + json.dumps(MODEL_DEFAULTS))
    lines.append("exit codes: 0 success, 1 computation failure, 2 config error")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="triwell",
        description="Tunnelling spectra, splittings and Husimi maps for three-well potentials.",
        epilog=_help_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("command", nargs="?", choices=SUBCOMMANDS, help="subcommand to run")
    p.add_argument("--subcommand", choices=SUBCOMMANDS, help="alternative to the positional subcommand")
    p.add_argument("--config", type=Path, help="key = value configuration file")
    p.add_argument("--output", type=Path, help="output directory (overrides the config's output key)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")
    p.add_argument(
        "--refine-resonances",
        action="store_true",
        help="resample around splitting spikes (poly-splitting) or add exact resonance maxima (square-exact)",
    )
    p.add_argument("--version", action="version", version=f"triwell {__version__}")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    command = args.subcommand or args.command
    if args.subcommand and args.command and args.subcommand != args.command:
        parser.error("positional subcommand and --subcommand disagree")
    if command is None:
        parser.error("a subcommand is required")
    if args.threads < 1:
        parser.error("--threads must be at least 1")

    try:
        if args.config is not None:
            try:
                text = args.config.read_text(encoding="utf-8")
            except (OSError, UnicodeDecodeError) as exc:
                raise ConfigError(f"cannot read {args.config}: {exc}") from None
            cfg = parse_config(text)
            need = SUBCOMMAND_MODEL[command]
            if need is not None and cfg.model != need:
                raise ConfigError(f"subcommand {command} needs model={need}, config has model={cfg.model}")
        else:
            cfg = default_config(SUBCOMMAND_MODEL[command] or "poly")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = args.output if args.output is not None else Path(cfg.output)
    writer = OutputWriter(out_dir, cfg, command)
    try:
        result = RUNNERS[command](cfg, writer, args)
    except Exception as exc:  # noqa: BLE001 - any failure maps to exit status 1
        writer.cleanup()
        print(f"error: {command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    if result is False:
        return EXIT_FAILURE
    for path in writer.written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
