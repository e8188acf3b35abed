"""Command-line driver: config-file experiments with manifested outputs.

Each subcommand reads one JSON config, runs a pipeline stage, and writes
its outputs plus a ``manifest.json`` recording the config hash, artifact
version, per-stage timings, and a checksum for every produced file.  All
outputs except the manifest's timing/timestamp fields are byte-identical
across re-runs with the same config and seed.

Exit codes: 0 success, 2 invalid config or usage, 3 numerical failure
(NaN blow-up or CFL violation), 4 I/O failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from . import __version__
from .core import (BoundaryTrace, DomainConfig, PotentialField, ScalarField,
                   make_grid, save_field)
from .geometry import region_mask
from .probes import BumpProfile, ProbeSpec, ansatz_state, extract_remainder, \
    probe_boundary_data
from .rays import (build_oracle_sinogram, build_sinogram, epsilon_schedule,
                   save_sinogram)
from .solver import CFL_SAFETY, IbvpProblem, solve_ibvp
from .spectral import error_report, fourier_from_sinogram, reconstruct
from .sweep import stability_sweep

__all__ = ["ExperimentConfig", "ConfigError", "main"]

_REGION_NAME = {"star": "Star", "sharp": "Sharp", "whole": "Whole"}
_FMT = "{:.17g}"


class ConfigError(ValueError):
    """Invalid experiment configuration (maps to exit code 2)."""


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"{where}: missing required key '{key}'")
    return d[key]


def _no_extras(d: dict, allowed: set[str], where: str) -> None:
    extra = sorted(set(d) - allowed)
    if extra:
        raise ConfigError(f"{where}: unknown keys {extra}")


def _as_float(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {v!r}")
    return float(v)


def _as_int(v, where: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where}: expected an integer, got {v!r}")
    return v


def _as_vec2(v, where: str) -> tuple[float, float]:
    if (not isinstance(v, (list, tuple)) or len(v) != 2):
        raise ConfigError(f"{where}: expected a 2-vector, got {v!r}")
    return (_as_float(v[0], where), _as_float(v[1], where))


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated contents of one experiment JSON file.

    Physical quantities carry units in their field names (``T_time``,
    ``L_length``); the schema is rejected on unknown keys so typos fail
    loudly instead of silently using defaults.
    """

    domain: DomainConfig
    mode: str
    potentials: dict[str, list[dict]]
    lambdas: list[float]
    direction_count: int
    offset_extent: float
    offset_step: float
    offset_min_radius: float
    probe_potential: str | None
    probe_offset: tuple[float, float] | None
    probe_eps: float | None
    probe_angle: float
    deltas: list[float]
    alpha_policy: object
    alpha_coeff: float
    pad: int
    tbar: float | None
    support_radius: float | None
    kmax: float | None
    fill: str
    pair: tuple[str | None, str | None]
    sweep_base: str | None
    sweep_perturbation: str | None
    forward_problem: str
    forward_modes: tuple[int, int]
    forward_potential: str | None
    seed: int
    out_dir: str | None
    raw_bytes: bytes = dataclass_field(repr=False, default=b"")

    @classmethod
    def from_dict(cls, d: dict, raw_bytes: bytes = b"") -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config root must be a JSON object")
        _no_extras(d, {"domain", "mode", "potentials", "probe", "noise",
                       "alpha", "spectral", "ray", "sweep", "forward",
                       "seed", "out_dir"}, "config")

        dd = _require(d, "domain", "config")
        _no_extras(dd, {"L_length", "r_length", "T_time", "nx", "nt"},
                   "domain")
        domain = DomainConfig(
            L=_as_float(_require(dd, "L_length", "domain"), "domain.L_length"),
            r=_as_float(_require(dd, "r_length", "domain"), "domain.r_length"),
            T=_as_float(_require(dd, "T_time", "domain"), "domain.T_time"),
            nx=_as_int(_require(dd, "nx", "domain"), "domain.nx"),
            nt=_as_int(_require(dd, "nt", "domain"), "domain.nt"))

        mode = d.get("mode", "star")
        if mode not in _REGION_NAME:
            raise ConfigError(
                f"mode must be one of star/sharp/whole, got {mode!r}")

        pots = d.get("potentials", {})
        if not isinstance(pots, dict):
            raise ConfigError("potentials must be an object of named recipes")
        for name, terms in pots.items():
            if not isinstance(terms, list) or not terms:
                raise ConfigError(
                    f"potential '{name}' must be a nonempty list of terms")
            for j, term in enumerate(terms):
                where = f"potentials.{name}[{j}]"
                kind = _require(term, "kind", where)
                if kind == "constant":
                    _no_extras(term, {"kind", "amplitude", "region_clamp"},
                               where)
                    _as_float(_require(term, "amplitude", where),
                              where + ".amplitude")
                elif kind == "gaussian_bump":
                    _no_extras(term, {"kind", "amplitude", "t0_time",
                                      "x0_length", "sigma_t_time",
                                      "sigma_x_length", "region_clamp"},
                               where)
                    for key in ("amplitude", "t0_time", "sigma_t_time",
                                "sigma_x_length"):
                        _as_float(_require(term, key, where),
                                  f"{where}.{key}")
                    _as_vec2(_require(term, "x0_length", where),
                             where + ".x0_length")
                    if term["sigma_t_time"] <= 0 or term["sigma_x_length"] <= 0:
                        raise ConfigError(f"{where}: sigmas must be positive")
                else:
                    raise ConfigError(
                        f"{where}: unknown recipe kind {kind!r} "
                        "(use 'constant' or 'gaussian_bump')")
                clamp = term.get("region_clamp")
                if clamp is not None and clamp not in _REGION_NAME:
                    raise ConfigError(
                        f"{where}: region_clamp must be star/sharp/whole")

        pr = d.get("probe", {})
        _no_extras(pr, {"lambdas", "direction_count", "offset_extent_length",
                        "offset_step_length", "offset_min_radius_length",
                        "potential", "offset_length", "bump_eps_length",
                        "direction_angle_rad"}, "probe")
        lambdas = pr.get("lambdas", [])
        if not isinstance(lambdas, list):
            raise ConfigError("probe.lambdas must be a list")
        lambdas = [_as_float(v, "probe.lambdas") for v in lambdas]
        if any(v <= 0 for v in lambdas):
            raise ConfigError("probe.lambdas must be positive")
        direction_count = _as_int(pr.get("direction_count", 8),
                                  "probe.direction_count")
        if direction_count < 1:
            raise ConfigError("probe.direction_count must be at least 1")
        offset_extent = _as_float(pr.get("offset_extent_length", 0.0),
                                  "probe.offset_extent_length")
        offset_step = _as_float(pr.get("offset_step_length", 0.0),
                                "probe.offset_step_length")
        offset_min_radius = _as_float(pr.get("offset_min_radius_length", 0.0),
                                      "probe.offset_min_radius_length")
        probe_potential = pr.get("potential")
        if probe_potential is not None and probe_potential not in pots:
            raise ConfigError(
                f"probe.potential '{probe_potential}' is not defined")
        probe_offset = (None if "offset_length" not in pr
                        else _as_vec2(pr["offset_length"],
                                      "probe.offset_length"))
        probe_eps = (None if "bump_eps_length" not in pr
                     else _as_float(pr["bump_eps_length"],
                                    "probe.bump_eps_length"))
        if probe_eps is not None and probe_eps <= 0:
            raise ConfigError("probe.bump_eps_length must be positive")
        probe_angle = _as_float(pr.get("direction_angle_rad", 0.0),
                                "probe.direction_angle_rad")

        nz = d.get("noise", {})
        _no_extras(nz, {"deltas"}, "noise")
        deltas = [_as_float(v, "noise.deltas") for v in nz.get("deltas", [])]
        if any(v < 0 for v in deltas):
            raise ConfigError("noise.deltas must be nonnegative")

        al = d.get("alpha", {})
        _no_extras(al, {"policy", "coefficient"}, "alpha")
        alpha_policy = al.get("policy", "auto")
        if isinstance(alpha_policy, str):
            if alpha_policy != "auto":
                raise ConfigError(
                    "alpha.policy must be 'auto', a number, or a list")
        elif isinstance(alpha_policy, list):
            alpha_policy = [_as_float(v, "alpha.policy") for v in alpha_policy]
        else:
            alpha_policy = _as_float(alpha_policy, "alpha.policy")
        alpha_coeff = _as_float(al.get("coefficient", 1.2),
                                "alpha.coefficient")
        if alpha_coeff <= 0:
            raise ConfigError("alpha.coefficient must be positive")

        sp = d.get("spectral", {})
        _no_extras(sp, {"pad", "tbar_time", "support_radius_length", "kmax",
                        "fill"}, "spectral")
        pad = _as_int(sp.get("pad", 2), "spectral.pad")
        tbar = (None if sp.get("tbar_time") is None
                else _as_float(sp["tbar_time"], "spectral.tbar_time"))
        support_radius = (None if sp.get("support_radius_length") is None
                          else _as_float(sp["support_radius_length"],
                                         "spectral.support_radius_length"))
        kmax = (None if sp.get("kmax") is None
                else _as_float(sp["kmax"], "spectral.kmax"))
        fill = sp.get("fill", "zero")
        if fill not in ("zero", "damped_extrapolation"):
            raise ConfigError(
                "spectral.fill must be 'zero' or 'damped_extrapolation'")

        def pot_name(v, where):
            if v is None:
                return None
            if not isinstance(v, str) or v not in pots:
                raise ConfigError(f"{where}: '{v}' is not a defined potential")
            return v

        ry = d.get("ray", {})
        _no_extras(ry, {"pair"}, "ray")
        pair_raw = ry.get("pair", [None, None])
        if not isinstance(pair_raw, list) or len(pair_raw) != 2:
            raise ConfigError("ray.pair must be a 2-element list")
        pair = (pot_name(pair_raw[0], "ray.pair[0]"),
                pot_name(pair_raw[1], "ray.pair[1]"))

        sw = d.get("sweep", {})
        _no_extras(sw, {"base", "perturbation"}, "sweep")
        sweep_base = pot_name(sw.get("base"), "sweep.base")
        sweep_perturbation = pot_name(sw.get("perturbation"),
                                      "sweep.perturbation")

        fw = d.get("forward", {})
        _no_extras(fw, {"problem", "modes", "potential"}, "forward")
        forward_problem = fw.get("problem", "zero")
        if forward_problem not in ("zero", "eigenmode", "probe"):
            raise ConfigError(
                "forward.problem must be 'zero', 'eigenmode', or 'probe'")
        modes_raw = fw.get("modes", [1, 1])
        if (not isinstance(modes_raw, list) or len(modes_raw) != 2):
            raise ConfigError("forward.modes must be a 2-element list")
        forward_modes = (_as_int(modes_raw[0], "forward.modes"),
                         _as_int(modes_raw[1], "forward.modes"))
        if min(forward_modes) < 1:
            raise ConfigError("forward.modes must be positive integers")
        forward_potential = pot_name(fw.get("potential"), "forward.potential")

        seed = _as_int(d.get("seed", 0), "seed")
        if not 0 <= seed < 2 ** 64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")

        out_dir = d.get("out_dir")
        if out_dir is not None and not isinstance(out_dir, str):
            raise ConfigError("out_dir must be a string")

        return cls(domain=domain, mode=mode, potentials=pots,
                   lambdas=lambdas, direction_count=direction_count,
                   offset_extent=offset_extent, offset_step=offset_step,
                   offset_min_radius=offset_min_radius,
                   probe_potential=probe_potential,
                   probe_offset=probe_offset, probe_eps=probe_eps,
                   probe_angle=probe_angle,
                   deltas=deltas, alpha_policy=alpha_policy,
                   alpha_coeff=alpha_coeff, pad=pad, tbar=tbar,
                   support_radius=support_radius, kmax=kmax, fill=fill,
                   pair=pair, sweep_base=sweep_base,
                   sweep_perturbation=sweep_perturbation,
                   forward_problem=forward_problem,
                   forward_modes=forward_modes,
                   forward_potential=forward_potential,
                   seed=seed, out_dir=out_dir, raw_bytes=raw_bytes)

    # -- realization ------------------------------------------------------

    def realize(self, name: str | None) -> PotentialField | None:
        """Evaluate a named recipe on the grid (None stays None)."""
        if name is None:
            return None
        cfg = self.domain
        grid = make_grid(cfg)
        vals = np.zeros((cfg.nt, cfg.nx, cfg.nx))
        for term in self.potentials[name]:
            if term["kind"] == "constant":
                tv = np.full_like(vals, float(term["amplitude"]))
            else:
                t0 = float(term["t0_time"])
                st = float(term["sigma_t_time"])
                sx = float(term["sigma_x_length"])
                x0 = term["x0_length"]
                tfac = np.exp(-0.5 * ((grid.t - t0) / st) ** 2)
                r2 = ((grid.x[:, None] - float(x0[0])) ** 2
                      + (grid.x[None, :] - float(x0[1])) ** 2)
                xfac = np.exp(-0.5 * r2 / sx ** 2)
                tv = float(term["amplitude"]) * tfac[:, None, None] \
                    * xfac[None, :, :]
            clamp = term.get("region_clamp")
            if clamp is not None:
                tv = tv * region_mask(cfg, _REGION_NAME[clamp]).values
            vals += tv
        bound = float(np.max(np.abs(vals))) * (1 + 1e-9) + 1e-300
        return PotentialField(field=ScalarField(grid=grid, values=vals),
                              bound=bound)

    def difference(self, pair: tuple[str | None, str | None]
                   ) -> PotentialField:
        """The potential difference q2 - q1 as a field on the grid."""
        cfg = self.domain
        grid = make_grid(cfg)
        vals = np.zeros((cfg.nt, cfg.nx, cfg.nx))
        q1, q2 = (self.realize(n) for n in pair)
        if q2 is not None:
            vals = vals + q2.values
        if q1 is not None:
            vals = vals - q1.values
        bound = float(np.max(np.abs(vals))) * (1 + 1e-9) + 1e-300
        return PotentialField(field=ScalarField(grid=grid, values=vals),
                              bound=bound)

    def directions(self) -> np.ndarray:
        th = 2.0 * np.pi * np.arange(self.direction_count) \
            / self.direction_count
        return np.stack([np.cos(th), np.sin(th)], axis=1)

    def offsets(self) -> np.ndarray:
        if self.offset_step <= 0 or self.offset_extent < self.offset_step:
            raise ConfigError(
                "probe.offset_step_length must be positive and no larger "
                "than probe.offset_extent_length")
        m = int(math.floor(self.offset_extent / self.offset_step + 1e-9))
        coords = np.arange(-m, m + 1) * self.offset_step
        Y1, Y2 = np.meshgrid(coords, coords, indexing="ij")
        pts = np.stack([Y1.ravel(), Y2.ravel()], axis=1)
        keep = np.hypot(pts[:, 0], pts[:, 1]) >= self.offset_min_radius
        return pts[keep]


def load_config(path: str) -> ExperimentConfig:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        data = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return ExperimentConfig.from_dict(data, raw_bytes=raw)


# -- manifest -------------------------------------------------------------

def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: str, command: str, econf: ExperimentConfig,
                   seed: int, workers: int, produced: list[str],
                   timings: dict[str, float]) -> str:
    """Record version, config hash, timings, and per-file checksums."""
    entries = []
    for rel in sorted(produced):
        full = os.path.join(out_dir, rel)
        entries.append({"path": rel, "bytes": os.path.getsize(full),
                        "sha256": _sha256(full)})
    manifest = {
        "artifact_version": __version__,
        "command": command,
        "config_sha256": hashlib.sha256(econf.raw_bytes).hexdigest(),
        "seed": seed,
        "workers": workers,
        "files": entries,
        "timings_s": {k: round(v, 6) for k, v in timings.items()},
        "created_unix": time.time(),
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _write_csv(path: str, header: str, rows: list[list[float]]) -> None:
    lines = [header]
    for row in rows:
        lines.append(",".join(_FMT.format(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


# -- subcommands ----------------------------------------------------------

def cmd_validate(econf: ExperimentConfig, args) -> int:
    checks: list[tuple[str, str | None]] = []

    def check(name: str, fn) -> None:
        try:
            fn()
            checks.append((name, None))
        except (ConfigError, ValueError) as exc:
            checks.append((name, str(exc)))

    cfg = econf.domain
    check("domain admissibility", cfg.validate)

    def cfl():
        grid = make_grid(cfg)
        limit = CFL_SAFETY * grid.dx / math.sqrt(2.0)
        if grid.dt > limit * (1 + 1e-12):
            raise ValueError(
                f"CFL violation: dt={grid.dt:.6g} exceeds {limit:.6g}")
    check("CFL bound", cfl)

    def resolution():
        if not econf.lambdas:
            return
        grid = make_grid(cfg)
        worst = max(econf.lambdas) * grid.dx
        if worst > 0.5:
            raise ValueError(
                f"probe frequency over grid resolution: "
                f"lam*dx = {worst:.4g} exceeds 0.5")
    check("probe resolution", resolution)

    def mollifier():
        for lam in econf.lambdas:
            epsilon_schedule(lam, cfg)
    check("mollifier schedule", mollifier)

    def recipes():
        for name in econf.potentials:
            econf.realize(name)
    check("potential recipes", recipes)

    def sweep_ready():
        if econf.sweep_perturbation is None:
            return
        if len(econf.deltas) < 4:
            raise ValueError("need at least 4 noise levels")
        pert = econf.realize(econf.sweep_perturbation)
        mask = region_mask(cfg, _REGION_NAME[econf.mode])
        outside = np.abs(pert.values) * (1.0 - mask.values)
        top = float(np.max(np.abs(pert.values)))
        if top > 0 and float(np.max(outside)) > 1e-12 * top:
            raise ValueError(
                f"perturbation '{econf.sweep_perturbation}' is not "
                f"admissible for mode '{econf.mode}'")
    check("sweep perturbation", sweep_ready)

    def offset_grid():
        if econf.offset_step > 0 or econf.offset_extent > 0:
            econf.offsets()
    check("offset grid", offset_grid)

    def alpha_vs_deltas():
        if (isinstance(econf.alpha_policy, list)
                and len(econf.alpha_policy) != len(econf.deltas)):
            raise ValueError(
                "alpha.policy list length must match noise.deltas")
    check("alpha policy", alpha_vs_deltas)

    def spectral_pad():
        if econf.pad < 2:
            raise ValueError("pad must be at least 2 (aliasing risk)")
        if econf.tbar is not None and not 0 <= econf.tbar <= cfg.T:
            raise ValueError("tbar_time must lie in [0, T]")
    check("spectral settings", spectral_pad)

    failed = 0
    for name, err in checks:
        if err is None:
            print(f"ok: {name}")
        else:
            failed += 1
            print(f"FAIL: {name}: {err}")
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return 0 if failed == 0 else 2


def _zero_trace(cfg: DomainConfig) -> BoundaryTrace:
    grid = make_grid(cfg)
    return BoundaryTrace(grid=grid,
                         values=np.zeros((cfg.nt, grid.n_edge)),
                         kind="dirichlet")


def _probe_spec(econf: ExperimentConfig) -> ProbeSpec:
    if not econf.lambdas:
        raise ConfigError("probe.lambdas is empty")
    if econf.probe_offset is None:
        raise ConfigError("probe.offset_length is required for this problem")
    lam = max(econf.lambdas)
    eps = (econf.probe_eps if econf.probe_eps is not None
           else epsilon_schedule(lam, econf.domain))
    bump = BumpProfile(center=econf.probe_offset, eps=eps)
    omega = (math.cos(econf.probe_angle), math.sin(econf.probe_angle))
    return ProbeSpec(bump=bump, omega=omega, lam=lam, sign=+1)


def cmd_forward(econf: ExperimentConfig, args, out_dir: str,
                seed: int) -> int:
    cfg = econf.domain
    grid = make_grid(cfg)
    problem_id = args.problem or econf.forward_problem
    if problem_id not in ("zero", "eigenmode", "probe"):
        raise ConfigError(
            "forward problem must be 'zero', 'eigenmode', or 'probe'")
    t0 = time.perf_counter()
    q = econf.realize(econf.forward_potential)
    if problem_id == "zero":
        p = IbvpProblem(f=_zero_trace(cfg), q=q)
    elif problem_id == "eigenmode":
        k, m = econf.forward_modes
        s1 = np.sin(k * np.pi * (grid.x + cfg.L) / (2 * cfg.L))
        s2 = np.sin(m * np.pi * (grid.x + cfg.L) / (2 * cfg.L))
        p = IbvpProblem(f=_zero_trace(cfg), q=q,
                        u0=np.outer(s1, s2), u1=np.zeros((cfg.nx, cfg.nx)))
    else:
        spec = _probe_spec(econf)
        f = probe_boundary_data(spec, cfg, mode=econf.mode)
        u0 = u1 = None
        if econf.mode == "whole":
            u0, u1 = ansatz_state(spec, grid, 0.0)
        p = IbvpProblem(f=f, q=q, u0=u0, u1=u1)
    setup_s = time.perf_counter() - t0

    t0 = time.perf_counter()
    out = solve_ibvp(p, keep_field=args.keep_fields)
    solve_s = time.perf_counter() - t0

    produced = []
    np.save(os.path.join(out_dir, "trace.npy"), out.neumann.values)
    produced.append("trace.npy")
    np.save(os.path.join(out_dir, "final_u.npy"), out.final.u_T)
    produced.append("final_u.npy")
    np.save(os.path.join(out_dir, "final_ut.npy"), out.final.ut_T)
    produced.append("final_ut.npy")
    if args.keep_fields and out.field is not None:
        save_field(out.field, os.path.join(out_dir, "field.rwf1"))
        produced.append("field.rwf1")
    write_manifest(out_dir, "forward", econf, seed, args.workers, produced,
                   {"setup": setup_s, "solve": solve_s})
    print(f"forward[{problem_id}]: wrote {len(produced)} files to {out_dir}")
    return 0


def cmd_probe(econf: ExperimentConfig, args, out_dir: str, seed: int) -> int:
    cfg = econf.domain
    if not econf.lambdas:
        raise ConfigError("probe.lambdas is empty")
    if econf.probe_offset is None:
        raise ConfigError("probe.offset_length is required")
    eps = (econf.probe_eps if econf.probe_eps is not None
           else epsilon_schedule(min(econf.lambdas), cfg))
    omega = (math.cos(econf.probe_angle), math.sin(econf.probe_angle))
    q = econf.realize(econf.probe_potential)

    t0 = time.perf_counter()
    rows = []
    produced = []
    for j, lam in enumerate(econf.lambdas):
        spec = ProbeSpec(bump=BumpProfile(center=econf.probe_offset, eps=eps),
                         omega=omega, lam=lam, sign=+1)
        field, rep = extract_remainder(q, spec, cfg, mode=econf.mode)
        rows.append([lam, rep.l2_Q])
        if args.keep_fields:
            name = f"remainder_{j:03d}.rwf1"
            save_field(field, os.path.join(out_dir, name))
            produced.append(name)
    solve_s = time.perf_counter() - t0

    lams = np.array([r[0] for r in rows])
    norms = np.array([r[1] for r in rows])
    if len(rows) >= 2 and np.all(norms > 0):
        slope = float(np.polyfit(np.log(lams), np.log(norms), 1)[0])
    else:
        slope = float("nan")
    _write_csv(os.path.join(out_dir, "remainder_decay.csv"),
               "lambda,remainder_l2,fit_slope",
               [[lam, nrm, slope] for lam, nrm in rows])
    produced.append("remainder_decay.csv")
    write_manifest(out_dir, "probe", econf, seed, args.workers, produced,
                   {"solve": solve_s})
    print(f"probe: {len(rows)} frequencies, fitted slope {slope:.4f}")
    return 0


def cmd_ray(econf: ExperimentConfig, args, out_dir: str, seed: int) -> int:
    cfg = econf.domain
    if not econf.lambdas:
        raise ConfigError("probe.lambdas is empty")
    lam = max(econf.lambdas)
    dirs = econf.directions()
    offs = econf.offsets()
    q1 = econf.realize(econf.pair[0])
    q2 = econf.realize(econf.pair[1])

    t0 = time.perf_counter()
    est = build_sinogram(q1, q2, dirs, offs, lam, econf.mode, cfg=cfg,
                         workers=max(1, args.workers))
    est_s = time.perf_counter() - t0
    t0 = time.perf_counter()
    oracle = build_oracle_sinogram(econf.difference(econf.pair), dirs, offs)
    oracle_s = time.perf_counter() - t0

    produced = []
    save_sinogram(est, os.path.join(out_dir, "sinogram_estimated.rws1"))
    produced.append("sinogram_estimated.rws1")
    save_sinogram(oracle, os.path.join(out_dir, "sinogram_oracle.rws1"))
    produced.append("sinogram_oracle.rws1")
    rows = []
    for i in range(dirs.shape[0]):
        for k in range(offs.shape[0]):
            e = est.values[i, k]
            o = oracle.values[i, k].real
            rows.append([float(i), float(k), e.real, e.imag, o,
                         abs(e - o)])
    _write_csv(os.path.join(out_dir, "ray_compare.csv"),
               "direction_index,offset_index,estimate_re,estimate_im,"
               "oracle,abs_error", rows)
    produced.append("ray_compare.csv")
    write_manifest(out_dir, "ray", econf, seed, args.workers, produced,
                   {"estimate": est_s, "oracle": oracle_s})
    probed = int(np.count_nonzero(est.lam))
    print(f"ray: {probed}/{dirs.shape[0] * offs.shape[0]} samples probed "
          f"at lambda={lam:g}")
    return 0


def cmd_reconstruct(econf: ExperimentConfig, args, out_dir: str,
                    seed: int) -> int:
    cfg = econf.domain
    if not econf.lambdas:
        raise ConfigError("probe.lambdas is empty")
    lam = max(econf.lambdas)
    q1 = econf.realize(econf.pair[0])
    q2 = econf.realize(econf.pair[1])
    diff = econf.difference(econf.pair)

    t0 = time.perf_counter()
    est = build_sinogram(q1, q2, econf.directions(), econf.offsets(), lam,
                         econf.mode, cfg=cfg, workers=max(1, args.workers))
    est_s = time.perf_counter() - t0
    t0 = time.perf_counter()
    cube = fourier_from_sinogram(est, cfg, pad=econf.pad, tbar=econf.tbar,
                                 support_radius=econf.support_radius,
                                 kmax=econf.kmax)
    alpha = (econf.alpha_policy if isinstance(econf.alpha_policy, float)
             else None)
    rec = reconstruct(cube, fill=econf.fill, alpha=alpha)
    rec_s = time.perf_counter() - t0

    mask = region_mask(cfg, _REGION_NAME[econf.mode])
    errs = error_report(diff, rec, mask=mask)
    produced = []
    save_sinogram(est, os.path.join(out_dir, "sinogram_estimated.rws1"))
    produced.append("sinogram_estimated.rws1")
    save_field(rec, os.path.join(out_dir, "recon.rwf1"))
    produced.append("recon.rwf1")
    if args.keep_fields:
        save_field(diff, os.path.join(out_dir, "true_diff.rwf1"))
        produced.append("true_diff.rwf1")
    alpha_used = alpha if alpha is not None else cube.alpha
    _write_csv(os.path.join(out_dir, "recon_errors.csv"),
               "err_hminus1,err_l2,err_linf,alpha_used",
               [[errs.hminus1, errs.l2, errs.linf, float(alpha_used)]])
    produced.append("recon_errors.csv")
    write_manifest(out_dir, "reconstruct", econf, seed, args.workers,
                   produced, {"estimate": est_s, "reconstruct": rec_s})
    print(f"reconstruct: relative errors H^-1 {errs.hminus1:.4g}, "
          f"L2 {errs.l2:.4g}, sup {errs.linf:.4g}")
    return 0


def cmd_sweep(econf: ExperimentConfig, args, out_dir: str, seed: int) -> int:
    cfg = econf.domain
    if not econf.lambdas:
        raise ConfigError("probe.lambdas is empty")
    if econf.sweep_perturbation is None:
        raise ConfigError("sweep.perturbation is required")
    if len(econf.deltas) < 4:
        raise ConfigError("need at least 4 noise levels")
    lam = max(econf.lambdas)

    t0 = time.perf_counter()
    table = stability_sweep(
        econf.realize(econf.sweep_base),
        econf.realize(econf.sweep_perturbation),
        econf.deltas, econf.mode, lam=lam,
        directions=econf.directions(), offsets=econf.offsets(), seed=seed,
        cfg=cfg, pad=econf.pad, tbar=econf.tbar,
        support_radius=econf.support_radius,
        alpha_policy=econf.alpha_policy, alpha_coeff=econf.alpha_coeff,
        fill=econf.fill, workers=max(1, args.workers))
    sweep_s = time.perf_counter() - t0

    path = os.path.join(out_dir, "stability.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(table.to_csv())
    write_manifest(out_dir, "sweep", econf, seed, args.workers,
                   ["stability.csv"], {"sweep": sweep_s})
    print(f"sweep: {len(table.rows)} noise levels, "
          f"power-law residual {table.fit_power_residual:.4g}, "
          f"log-law residual {table.fit_log_residual:.4g}")
    return 0


# -- entry point ----------------------------------------------------------

def _parse_seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from exc
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in unsigned 64 bits")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH",
                        help="experiment JSON file")
    common.add_argument("--out", metavar="DIR", default=None,
                        help="output directory (overrides config out_dir)")
    common.add_argument("--workers", type=int, default=1, metavar="N",
                        help="thread count for independent samples")
    common.add_argument("--seed", type=_parse_seed, default=None,
                        metavar="U64", help="noise seed (overrides config)")
    common.add_argument("--keep-fields", action="store_true",
                        help="also write full space-time fields")
    parser = argparse.ArgumentParser(
        prog="waveray",
        description="boundary-data probing and reconstruction experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common],
                   help="check a config without running anything")
    fw = sub.add_parser("forward", parents=[common],
                        help="solve one forward problem and save its data")
    fw.add_argument("--problem", choices=("zero", "eigenmode", "probe"),
                    default=None, help="override forward.problem")
    sub.add_parser("probe", parents=[common],
                   help="remainder decay of the oscillatory probe family")
    sub.add_parser("ray", parents=[common],
                   help="estimated and oracle sinograms plus comparison")
    sub.add_parser("reconstruct", parents=[common],
                   help="band-limited reconstruction from estimated rays")
    sub.add_parser("sweep", parents=[common],
                   help="noise-level stability curve")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if not hasattr(args, "problem"):
        args.problem = None
    try:
        econf = load_config(args.config)
        if args.command == "validate":
            return cmd_validate(econf, args)
        seed = args.seed if args.seed is not None else econf.seed
        out_dir = args.out if args.out is not None else econf.out_dir
        if out_dir is None:
            raise ConfigError("no output directory: set out_dir or --out")
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        os.makedirs(out_dir, exist_ok=True)
        if args.command == "forward":
            return cmd_forward(econf, args, out_dir, seed)
        if args.command == "probe":
            return cmd_probe(econf, args, out_dir, seed)
        if args.command == "ray":
            return cmd_ray(econf, args, out_dir, seed)
        if args.command == "reconstruct":
            return cmd_reconstruct(econf, args, out_dir, seed)
        return cmd_sweep(econf, args, out_dir, seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except RuntimeError as exc:
        if "NaN" in str(exc):
            print(f"numerical failure: {exc}", file=sys.stderr)
            return 3
        raise
    except ValueError as exc:
        if "CFL" in str(exc):
            print(f"numerical failure: {exc}", file=sys.stderr)
            return 3
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
