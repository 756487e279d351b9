"""Command-line entry point: ``expansionlab <command> [options]``.

Exit codes: 0 success, 1 failed verification or invalid input, 2 parse or
schema error, 3 enumeration cap exceeded.
"""

from __future__ import annotations

import argparse
import re
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import families, io
from .errors import LabError, SchemaError
from .expansion import (
    DEFAULT_K_MAX,
    asymptotic_profile,
    build_action_kernel,
    local_spectral_gap,
    transfer_check,
)
from .markov_core import (
    ENUMERATION_CAP,
    cheeger_exact,
    cheeger_sweep,
    detailed_balance_residual,
    edge_measure,
    lambda2,
    verify_cheeger_sandwich,
)
from .operator_analysis import (
    averaging_projection,
    finite_propagation_witnesses,
    generator_operator,
    ghost_profile,
    hat_markov_operator,
    markov_power_projection,
    poincare_obstruction_witness,
    refining_ghost_profile,
    rho_propagation,
    rho_quasi_locality_profile,
    uniform_warped_profile,
)
from .verify import run_verify
from .warped_cone import (
    DEFAULT_EXPONENTS,
    cone_from_levels,
    discrete_metric,
    dyadic_ultrametric,
    levels_to_csv,
    warp,
)

COMMANDS = ("gen", "kernel", "cheeger", "spectrum", "expansion", "warp", "oplab", "verify")
OPLAB_MODES = ("propagation", "qlocal", "power", "ghost", "poincare")
DEFAULT_T_LEVELS = tuple(2.0 ** k for k in DEFAULT_EXPONENTS)
N_POWERS = 50


@dataclass(frozen=True)
class RunConfig:
    command: str
    mode: Optional[str] = None
    input_path: Optional[str] = None
    output_path: Optional[str] = None
    builtin: Optional[str] = None
    seed: int = 0
    enumeration_cap: int = ENUMERATION_CAP
    k_max: int = DEFAULT_K_MAX
    t_levels: tuple = DEFAULT_T_LEVELS
    radius: float = 2.0
    fmt: str = "csv"
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if self.enumeration_cap <= 0 or self.k_max <= 0:
            raise ValueError("caps must be positive")
        if not self.t_levels or any(t < 1 for t in self.t_levels):
            raise ValueError("warping levels must be >= 1")


# -- inputs ------------------------------------------------------------------

def _family_from_doc(doc, name):
    kind = io.kind_of(doc)
    if kind == "kernel":
        return families.Family(name, kernel=io.kernel_from_doc(doc))
    if kind == "chain":
        chain = tuple(io.chain_from_doc(doc))
        top = chain[-1]
        n = top.n
        metric = dyadic_ultrametric(top.space) if n & (n - 1) == 0 else discrete_metric(top.space, 2.0)
        return families.Family(name, top, metric, chain=chain)
    action = io.action_from_doc(doc)
    metric = io.metric_from_doc(doc, action.space)
    if metric is None:
        metric = discrete_metric(action.space, 2.0)
    return families.Family(name, action, metric)


def _read_input(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise LabError(f"cannot read {path}: {exc.strerror}") from None
    return _family_from_doc(io.loads(text), path)


def _builtin(text):
    try:
        return families.resolve(text)
    except (KeyError, ValueError) as exc:
        raise SchemaError(str(exc.args[0] if exc.args else exc), path="--builtin") from None


def _families(cfg):
    if cfg.input_path:
        return [_read_input(cfg.input_path)]
    if cfg.builtin:
        return _builtin(cfg.builtin)
    raise SchemaError("give --input or --builtin", path="arguments")


def _one(cfg):
    fams = _families(cfg)
    if len(fams) != 1:
        raise SchemaError("this command takes a single family", path="--builtin")
    return fams[0]


def _need_action(fam, what):
    if fam.action is None:
        raise LabError(f"{what} needs a group action; {fam.name} is a bare kernel")
    return fam.action


def _kernel_of(fam):
    if fam.kernel is not None:
        return fam.kernel, fam.kernel.reversing_measure, None
    ak = build_action_kernel(fam.action)
    return ak.kernel, ak.tilde_nu, ak


def _ids(space, idx):
    return [space.point_ids[i] for i in idx]


# -- commands ----------------------------------------------------------------

def _gen(cfg):
    fam = _one(cfg)
    if fam.chain and fam.chain_levels:
        return io.chain_doc(families.DYADIC_GENS, fam.chain_levels)
    if fam.action is not None:
        return io.action_doc(fam.action, fam.metric)
    return io.kernel_doc(fam.kernel)


def _kernel(cfg):
    fam = _one(cfg)
    k, m, ak = _kernel_of(fam)
    res, pair = detailed_balance_residual(k, m)
    doc = {
        "family": fam.name,
        "points": list(k.space.point_ids),
        "transition": k.transition,
        "reversing_measure": m,
        "detailed_balance_residual": res,
        "worst_pair": list(pair),
        "edge_measure": edge_measure(k, m).mu,
    }
    if ak is not None:
        doc["sigma"] = ak.sigma
        doc["generators"] = list(ak.S)
    return doc


def _cheeger(cfg):
    fam = _one(cfg)
    k, m, _ = _kernel_of(fam)
    kappa, subset = cheeger_exact(k, m, cap=cfg.enumeration_cap)
    sand = verify_cheeger_sandwich(k, m, cap=cfg.enumeration_cap)
    doc = {
        "family": fam.name,
        "kappa": kappa,
        "lambda2": sand.lambda2,
        "spectral_gap": sand.spectral_gap,
        "argmin_subset": _ids(k.space, subset),
        "sandwich": {"lower": sand.lower, "upper": sand.upper, "holds": sand.holds},
    }
    if k.n > 1:
        sw = cheeger_sweep(k, m)
        doc["sweep"] = {"kappa_upper": sw.kappa_upper,
                        "subset": _ids(k.space, sw.sweep_subset)}
    return doc


def _spectrum(cfg):
    fam = _one(cfg)
    k, m, _ = _kernel_of(fam)
    return {"family": fam.name, **io._plain(lambda2(k, m))}


def _expansion(cfg):
    fam = _one(cfg)
    a = _need_action(fam, "expansion")
    tr = transfer_check(a, cap=cfg.enumeration_cap)
    prof = asymptotic_profile(a, k_max=cfg.k_max, cap=cfg.enumeration_cap)
    return {
        "family": fam.name,
        "transfer": tr,
        "local_gap": local_spectral_gap(a),
        "profile": {
            "k_max": prof.k_max,
            "expanding": prof.expanding,
            "records": prof.records,
            "upper_range": prof.upper_range,
        },
    }


def _cone(fam, cfg):
    a = _need_action(fam, "warping")
    return cone_from_levels(fam.metric, a, cfg.t_levels)


def _warp(cfg):
    fam = _one(cfg)
    a = _need_action(fam, "warping")
    levels = [warp(fam.metric, a, t) for t in cfg.t_levels]
    if cfg.fmt == "csv":
        return levels_to_csv(levels)
    return {
        "family": fam.name,
        "points": list(a.space.point_ids),
        "levels": [{"t": lev.t, "bellman_gap": lev.bellman_gap, "distance": lev.warped}
                   for lev in levels],
    }


def _refining_ghost(text, R):
    _, _, raw = text.partition(":")
    ns = tuple(int(v) for v in raw.split(",")) if raw else (2, 4, 8, 16)
    pairs, sizes = [], []
    for n, a, metric, t in families.margulis_refining(ns):
        pairs.append((averaging_projection(a.space), warp(metric, a, t)))
        sizes.append(n)
    levels = refining_ghost_profile(pairs, R)
    gs = [lev.g for lev in levels]
    return {
        "family": text,
        "R": R,
        "torus_sizes": sizes,
        "levels": levels,
        "strictly_decreasing": all(b < a for a, b in zip(gs, gs[1:])),
    }


def _oplab(cfg):
    if cfg.mode == "ghost" and cfg.builtin and cfg.builtin.startswith("margulis-refining"):
        return _refining_ghost(cfg.builtin, cfg.radius)
    fam = _one(cfg)
    rng = np.random.default_rng(cfg.seed)
    if cfg.mode == "power":
        src = fam.kernel if fam.kernel is not None else build_action_kernel(fam.action)
        return {"family": fam.name, "report": markov_power_projection(src, N_POWERS)}
    a = _need_action(fam, f"oplab {cfg.mode}")
    ak = build_action_kernel(a)
    if cfg.mode == "propagation":
        gens = {s: rho_propagation(generator_operator(a, s), a) for s in a.gens.symbols}
        return {
            "family": fam.name,
            "generators": gens,
            "hat_markov": rho_propagation(hat_markov_operator(ak), a),
            "witnesses": finite_propagation_witnesses(ak, range(cfg.k_max + 1)),
        }
    P = averaging_projection(a.space)
    if cfg.mode == "qlocal":
        radii = list(range(cfg.k_max + 1))
        dyn = rho_quasi_locality_profile(P, a, radii, cap=cfg.enumeration_cap, rng=rng)
        cone = _cone(fam, cfg)
        warped = uniform_warped_profile(P, cone.levels, radii, cap=cfg.enumeration_cap, rng=rng)
        return {"family": fam.name, "dynamical": _named(a, dyn), "warped": _named(a, warped)}
    cone = _cone(fam, cfg)
    if cfg.mode == "ghost":
        return {"family": fam.name, "R": cfg.radius,
                "levels": ghost_profile(P, cone, cfg.radius)}
    embs = [rng.normal(size=(a.n, 3)) for _ in cone.levels]
    return {"family": fam.name,
            "report": poincare_obstruction_witness(ak, embs, levels=cone.levels)}


def _named(action, prof):
    ids = action.space.point_ids

    def conv(w):
        return [list(_ids(action.space, part)) if isinstance(part, tuple) else part for part in w]

    return {"radii": prof.radii, "eps": prof.eps, "mode": prof.mode,
            "witnesses": [conv(w) for w in prof.witnesses], "n_atoms": len(ids)}


def _verify(cfg):
    fams = _families(cfg) if (cfg.input_path or cfg.builtin) else _builtin("all")
    rep = run_verify(fams, seed=cfg.seed, tolerances=cfg.tolerances)
    doc = {
        "seed": rep.seed,
        "families": list(rep.families),
        "n_checks": rep.n_checks,
        "n_failed": rep.n_failed,
        "passed": rep.passed,
        "checks": [{"check_name": c.check_name, "status": c.status,
                    "worst_violation": c.worst_violation, "witness": _witness(c.witness)}
                   for c in rep.checks],
    }
    return doc, (0 if rep.passed else 1)


def _witness(w):
    v = io._plain(w)
    return v if isinstance(v, (str, int, float, bool, list, dict)) or v is None else str(v)


HANDLERS = {
    "gen": _gen,
    "kernel": _kernel,
    "cheeger": _cheeger,
    "spectrum": _spectrum,
    "expansion": _expansion,
    "warp": _warp,
    "oplab": _oplab,
}


def _emit(text, path):
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def run(cfg):
    """Execute one command; returns the process exit code."""
    try:
        if cfg.command == "verify":
            doc, code = _verify(cfg)
        else:
            doc, code = HANDLERS[cfg.command](cfg), 0
        _emit(doc if isinstance(doc, str) else io.dumps(doc), cfg.output_path)
        return code
    except LabError as exc:
        print(f"expansionlab {cfg.command}: {exc}", file=sys.stderr)
        return exc.exit_code


# -- argument parsing --------------------------------------------------------

_LEVELS = re.compile(r"^2\^(-?\d+)\.\.2\^(-?\d+)$")


def parse_levels(text):
    """``2^a..2^b`` into ``(2^a, ..., 2^b)``."""
    m = _LEVELS.match(text.replace(" ", ""))
    if not m:
        raise argparse.ArgumentTypeError(f"expected 2^a..2^b, got {text!r}")
    a, b = int(m.group(1)), int(m.group(2))
    if b < a:
        raise argparse.ArgumentTypeError("empty level range")
    return tuple(2.0 ** k for k in range(a, b + 1))


def parse_t_list(text):
    try:
        ts = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad --t-list {text!r}") from None
    if not ts:
        raise argparse.ArgumentTypeError("--t-list is empty")
    return ts


def parse_tolerance(text):
    key, sep, val = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key.strip(), float(val)
    except ValueError:
        raise argparse.ArgumentTypeError(f"tolerance {key!r} is not a number") from None


def _positive(text):
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="expansionlab",
                                description="Expansion, warped cones and operator locality on finite actions.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("mode", nargs="?", choices=OPLAB_MODES, help="oplab analysis")
    p.add_argument("--input", help="JSON kernel, action or chain document")
    p.add_argument("--output", help="report path (default: stdout)")
    p.add_argument("--builtin", help="registry family, e.g. cycle:8, or 'all'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cap", type=_positive, default=ENUMERATION_CAP,
                   help="largest atom count for exhaustive subset scans")
    p.add_argument("--k-max", type=_positive, default=DEFAULT_K_MAX)
    lv = p.add_mutually_exclusive_group()
    lv.add_argument("--t-list", type=parse_t_list, help="comma separated warping scales")
    lv.add_argument("--levels", type=parse_levels, help="scales 2^a..2^b")
    p.add_argument("--radius", type=float, default=2.0, help="ball radius for oplab ghost")
    p.add_argument("--format", dest="fmt", choices=("csv", "json"), default="csv",
                   help="warp output format")
    p.add_argument("--tolerance", type=parse_tolerance, action="append", default=[],
                   metavar="KEY=VALUE")
    return p


def config_from_args(ns):
    if ns.command == "oplab" and ns.mode is None:
        raise SchemaError(f"oplab needs a mode: {', '.join(OPLAB_MODES)}", path="arguments")
    if ns.command != "oplab" and ns.mode is not None:
        raise SchemaError("only oplab takes a mode", path="arguments")
    t_levels = ns.t_list or ns.levels or DEFAULT_T_LEVELS
    return RunConfig(ns.command, ns.mode, ns.input, ns.output, ns.builtin, ns.seed, ns.cap,
                     ns.k_max, tuple(t_levels), ns.radius, ns.fmt, dict(ns.tolerance))


def main(argv=None):
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = config_from_args(ns)
    except SchemaError as exc:
        print(f"expansionlab: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"expansionlab: {exc}", file=sys.stderr)
        return 2
    if cfg.command == "verify":
        unknown = set(cfg.tolerances) - set(_tolerance_keys())
        if unknown:
            print(f"expansionlab: unknown tolerance keys {sorted(unknown)}; "
                  f"known: {', '.join(_tolerance_keys())}", file=sys.stderr)
            return 2
    return run(cfg)


def _tolerance_keys():
    from .verify import DEFAULT_TOLERANCES
    return tuple(DEFAULT_TOLERANCES)


if __name__ == "__main__":
    sys.exit(main())
