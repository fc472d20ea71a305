"""Command line entry point: ``cartankit <task> ...`` or ``cartankit run spec.json``.

Exit codes: 0 success, 1 invariant or schema failure, 2 numerical solver cap.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .eh import SolverError, gamma2
from .relation import SpecError, band_limit, relation_from_json, relation_to_json, random_fm_relation
from .symbols import build_operator, operator_norm, sup_norm

TASKS = ("validate", "multiplier", "ehnorm", "tower", "toeplitz", "bridge", "question-scan")
DIGITS = 12

EXIT_OK, EXIT_INVARIANT, EXIT_SOLVER = 0, 1, 2


@dataclass
class ExperimentSpec:
    task: str
    params: dict = field(default_factory=dict)
    relation: dict | None = None  # the relation JSON object, already loaded
    seed: int = 0
    output: str | None = None
    source: str | None = None  # path the relation was read from, if any

    def canonical(self) -> dict:
        """Everything that determines the report; the output path does not."""
        return {"task": self.task, "params": self.params, "relation": self.relation, "seed": self.seed}

    def digest(self) -> str:
        blob = json.dumps(_jsonable(self.canonical()), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class Report:
    task: str
    spec_hash: str
    results: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)  # name -> list of row dicts
    checks: dict = field(default_factory=dict)  # name -> bool
    exit_code: int = EXIT_OK
    timings: dict = field(default_factory=dict)

    def as_dict(self, timings: bool = False) -> dict:
        out = {
            "library": "cartankit",
            "version": __version__,
            "spec_hash": self.spec_hash,
            "task": self.task,
            "passed": self.exit_code == EXIT_OK,
            "exit_code": self.exit_code,
            "checks": self.checks,
            "results": self.results,
            "tables": self.tables,
        }
        if timings:
            out["timings"] = self.timings
        return _jsonable(out)

    def to_json(self, timings: bool = False) -> str:
        return json.dumps(self.as_dict(timings), indent=2, sort_keys=True) + "\n"

    def to_csv(self, table: str | None = None) -> str:
        name = table or next(iter(self.tables), None)
        rows = self.tables.get(name, []) if name else []
        buf = io.StringIO()
        buf.write(f"# cartankit {__version__} spec {self.spec_hash}\n")
        if rows:
            w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: _fmt_cell(v) for k, v in _jsonable(r).items()})
        return buf.getvalue()


def _round(x: float) -> float:
    if not math.isfinite(x):
        return x
    return float(f"{x:.{DIGITS}g}")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = _round(float(obj))
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (complex, np.complexfloating)):
        return [_jsonable(obj.real), _jsonable(obj.imag)]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _fmt_cell(v):
    if isinstance(v, float):
        return f"{v:.{DIGITS}g}"
    return v


# ---------------------------------------------------------------------------
# spec parsing


def _load_json(path, errors, pointer):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        errors.append(("file-not-found", pointer, f"{path} does not exist"))
    except json.JSONDecodeError as exc:
        errors.append(("bad-json", pointer, f"{path}: {exc}"))
    return None


def _parse_levels(text) -> list[int]:
    if isinstance(text, list):
        return [int(v) for v in text]
    text = str(text)
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(v) for v in text.split(",") if v.strip()]


_REQUIRED = {
    "validate": ("relation",),
    "multiplier": ("relation", "phi"),
    "ehnorm": ("blocks",),
    "tower": ("level",),
    "toeplitz": ("set", "levels"),
    "bridge": ("level",),
    "question-scan": (),
}


def spec_from_dict(obj: dict, base: Path | None = None) -> ExperimentSpec:
    """Validate an experiment description; raises SpecError with JSON pointers."""
    errors = []
    if not isinstance(obj, dict):
        raise SpecError([("bad-spec", "", "the spec must be a JSON object")])
    task = obj.get("task")
    if task is None:
        raise SpecError([("missing-field", "/task", "required field 'task' is absent")])
    if task not in TASKS:
        raise SpecError([("unknown-task", "/task", f"task must be one of {', '.join(TASKS)}")])
    params = dict(obj.get("params", {}) or {})
    relation = obj.get("relation")
    source = None
    if isinstance(relation, str):
        source = relation
        path = Path(relation)
        if base is not None and not path.is_absolute():
            path = base / path
        relation = _load_json(path, errors, "/relation")
    # ehnorm patterns and multiplier symbols may also be given by file
    for key in ("phi", "blocks", "iso"):
        if isinstance(params.get(key), str) and params[key].endswith(".json"):
            path = Path(params[key])
            if base is not None and not path.is_absolute():
                path = base / path
            params[key] = _load_json(path, errors, f"/params/{key}")
    for key in _REQUIRED[task]:
        if key == "relation":
            if obj.get("relation") is None:
                errors.append(("missing-field", "/relation", "this task needs a relation"))
        elif key not in params:
            errors.append(("missing-field", f"/params/{key}", f"task {task!r} needs parameter {key!r}"))
    seed = obj.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        errors.append(("bad-param", "/seed", "seed must be a non-negative integer"))
    if errors:
        raise SpecError(errors)
    if relation is not None:
        try:
            relation_from_json(relation)
        except SpecError as exc:
            raise SpecError([(c, "/relation" + p, m) for c, p, m in exc.errors]) from None
    if task in ("tower", "bridge"):
        N = params["level"]
        limit = 6 if task == "tower" else 5
        if isinstance(N, bool) or not isinstance(N, int) or not 0 <= N <= limit:
            raise SpecError([("bad-param", "/params/level", f"level must be an integer in 0..{limit}")])
    if task == "toeplitz":
        try:
            lv = _parse_levels(params["levels"])
        except ValueError:
            lv = []
        if not lv or any(not 1 <= n <= 6 for n in lv):
            raise SpecError([("bad-param", "/params/levels", "levels must be a range inside 1..6, e.g. 2..6")])
        params["levels"] = lv
        from .toeplitz import ExprError, parse_set

        try:
            parse_set(str(params["set"]))
        except ExprError as exc:
            raise SpecError([("parse-error", "/params/set", str(exc))]) from None
    if task == "multiplier":
        k = params.setdefault("k_max", 4)
        if isinstance(k, bool) or not isinstance(k, int) or not 1 <= k <= 4:
            raise SpecError([("bad-param", "/params/k_max", "k_max must be an integer in 1..4")])
    return ExperimentSpec(task, params, relation, int(seed), obj.get("output"), source)


def parse_spec(path) -> ExperimentSpec:
    path = Path(path)
    errors = []
    obj = _load_json(path, errors, "")
    if errors:
        raise SpecError(errors)
    return spec_from_dict(obj, base=path.parent)


# ---------------------------------------------------------------------------
# value decoding


def _complex(v, pointer):
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, dict):
        return complex(float(v.get("re", 0.0)), float(v.get("im", 0.0)))
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(v)
    raise SpecError([("bad-param", pointer, f"cannot read {v!r} as a complex number")])


def decode_phi(fm, phi, seed: int = 0) -> np.ndarray:
    """``"ones"``, ``"diagonal"``, ``"random"``, a list in canonical pair order,
    or a list of ``{"x", "y", "re", "im"}`` entries (unlisted pairs are 0)."""
    if isinstance(phi, str):
        if phi == "ones":
            return np.ones(fm.n_pairs, dtype=complex)
        if phi == "diagonal":
            return fm.chi_diagonal()
        if phi == "random":
            rng = np.random.default_rng(seed)
            return rng.normal(size=fm.n_pairs) + 1j * rng.normal(size=fm.n_pairs)
        raise SpecError([("bad-param", "/params/phi", f"unknown symbol keyword {phi!r}")])
    if isinstance(phi, dict) and "values" in phi:
        phi = phi["values"]
    if isinstance(phi, list) and phi and isinstance(phi[0], dict) and "x" in phi[0]:
        out = np.zeros(fm.n_pairs, dtype=complex)
        for k, e in enumerate(phi):
            ptr = f"/params/phi/{k}"
            try:
                x, y = fm.space.index(str(e["x"])), fm.space.index(str(e["y"]))
            except (KeyError, ValueError) as exc:
                raise SpecError([("bad-param", ptr, f"unknown atom {exc}")]) from None
            p = fm.rel.pair_index[x, y]
            if p < 0:
                raise SpecError([("bad-param", ptr, "pair is not in the relation")])
            out[p] = _complex(e, ptr)
        return out
    if isinstance(phi, list):
        if len(phi) != fm.n_pairs:
            raise SpecError([("bad-param", "/params/phi", f"expected {fm.n_pairs} values in canonical pair order")])
        return np.array([_complex(v, f"/params/phi/{k}") for k, v in enumerate(phi)])
    raise SpecError([("bad-param", "/params/phi", "unsupported symbol format")])


def decode_matrix(m, pointer) -> np.ndarray:
    if not isinstance(m, list) or not m or not all(isinstance(r, list) for r in m):
        raise SpecError([("bad-param", pointer, "a pattern is a non-empty list of rows")])
    width = len(m[0])
    if any(len(r) != width for r in m):
        raise SpecError([("bad-param", pointer, "rows have different lengths")])
    return np.array([[_complex(v, f"{pointer}/{i}/{j}") for j, v in enumerate(r)] for i, r in enumerate(m)])


# ---------------------------------------------------------------------------
# tasks


def _task_validate(spec, rep):
    fm = relation_from_json(spec.relation)
    v = fm.validate()
    rep.checks["relation-valid"] = v.ok
    rep.checks["cocycle-skew"] = not v.skew_violations
    rep.results = {
        "atoms": fm.n,
        "blocks": len(fm.rel.blocks),
        "pairs": fm.n_pairs,
        "max_block": max((len(b) for b in fm.rel.blocks), default=0),
        "cocycle_entries": len(fm.sigma.values),
        "band_limit_relation": band_limit(fm.rel, fm.rel.pairs),
        "violations": [{"code": x.code, "message": x.message} for x in v.violations],
        "skew_violations": [{"code": x.code, "message": x.message} for x in v.skew_violations],
        "relation": relation_to_json(fm),
    }


def _task_multiplier(spec, rep):
    from .schur import BimoduleMapProbe, cb_norm_estimate, is_bimodule_map, multiplier_norm, recover_symbol

    fm = relation_from_json(spec.relation)
    phi = decode_phi(fm, spec.params["phi"], spec.seed)
    nrm = multiplier_norm(fm, phi)
    cb = cb_norm_estimate(fm, phi, spec.params["k_max"])
    probe = BimoduleMapProbe.multiplier(fm, phi)
    cert = is_bimodule_map(probe)
    recovered = recover_symbol(probe) if cert else None
    rep.results = {
        "norm": nrm.value,
        "lower": nrm.lower,
        "gap": nrm.gap,
        "cb_list": cb,
        "is_bimodule": bool(cert),
        "sup_norm": sup_norm(phi),
        "recovery_error": float(np.abs(recovered - phi).max()) if recovered is not None else None,
    }
    rep.checks["gap"] = nrm.gap <= 1e-6
    rep.checks["cb-equals-norm"] = max(cb) - min(cb) <= 1e-4
    rep.checks["sup-below-norm"] = sup_norm(phi) <= nrm.value + 1e-9
    rep.checks["bimodule"] = bool(cert)
    rep.checks["recovery"] = recovered is not None and float(np.abs(recovered - phi).max()) <= 1e-12


def _task_ehnorm(spec, rep):
    blocks = spec.params["blocks"]
    if isinstance(blocks, dict) and "blocks" in blocks:
        blocks = blocks["blocks"]
    if not isinstance(blocks, list) or not blocks:
        raise SpecError([("bad-param", "/params/blocks", "expected a list of dense matrices")])
    if isinstance(blocks[0], list) and blocks[0] and not isinstance(blocks[0][0], list):
        blocks = [blocks]  # a single matrix
    rows = []
    for b, m in enumerate(blocks):
        r = gamma2(decode_matrix(m, f"/params/blocks/{b}"))
        rows.append({"block": b, "gamma2": r.value, "lower": r.lower, "primal_gap": r.gap,
                     "factor_rank": r.rank, "method": r.method})
    best = max(rows, key=lambda r: r["gamma2"])
    rep.results = {
        "gamma2": best["gamma2"],
        "primal_gap": max(r["primal_gap"] for r in rows),
        "factor_rank": max(r["factor_rank"] for r in rows),
    }
    rep.tables["blocks"] = rows
    rep.checks["gap"] = rep.results["primal_gap"] <= 1e-6


def _task_tower(spec, rep):
    from .dyadic import tower_suite

    N = spec.params["level"]
    tr = tower_suite(N, seed=spec.seed, samples=int(spec.params.get("samples", 20)),
                     schur_pairs=int(spec.params.get("schur_pairs", 200)),
                     l2_samples=int(spec.params.get("l2_samples", 100)))
    rep.tables["checks"] = [c.as_dict() for c in tr.checks]
    rep.checks.update({c.name: c.passed for c in tr.checks})
    rep.results = {"level": N, "norms": tr.norms}


def _task_toeplitz(spec, rep):
    from .toeplitz import coset_ring_decide, norm_growth_scan, parse_set, toeplitz_multiplier

    node = parse_set(spec.params["set"])
    dec = coset_ring_decide(node)
    rows = norm_growth_scan(node, spec.params["levels"])
    rep.tables["scan"] = [{"N": r.N, "norm": r.norm, "gamma2": r.gamma2, "decision": r.decision} for r in rows]
    values = [r.gamma2 for r in rows]
    rep.checks["monotone"] = all(b >= a - 1e-6 for a, b in zip(values, values[1:]))
    rep.checks["norm-matches-gamma2"] = all(abs(r.norm - r.gamma2) <= 1e-6 for r in rows)
    rep.checks["idempotent"] = all(
        np.array_equal(p * p, p) for p in (toeplitz_multiplier(node, n).symbol() for n in spec.params["levels"])
    )
    bound = dec.norm_bound()
    if bound is not None:
        rep.checks["below-coset-bound"] = all(v <= bound + 1e-6 for v in values)
    rep.results = {
        "set": str(node),
        "decision": dec.label,
        "kind": dec.kind,
        "reason": dec.reason,
        "stable_level": dec.stable_level,
        "period": dec.period,
        "count": dec.count,
        "norm_bound": bound,
        "witnesses": dec.witnesses,
    }


def _task_bridge(spec, rep):
    from .groupoid import RelIsoData, bridge_suite, conjugate, transfer_unitary, _unitary_defect
    from .schur import multiplier_norm

    N = spec.params["level"]
    br = bridge_suite(N, seed=spec.seed, samples=int(spec.params.get("samples", 100)))
    rows = [{"name": k, "worst": w, "tol": t, "passed": w <= t} for k, (w, t) in br.checks.items()]
    if spec.params.get("iso") is not None:
        try:
            iso = RelIsoData.from_json(spec.params["iso"])
        except ValueError as exc:
            raise SpecError([("bad-param", "/params/iso", str(exc))]) from None
        rng = np.random.default_rng(spec.seed)
        a = rng.normal(size=iso.fm1.n_pairs) + 1j * rng.normal(size=iso.fm1.n_pairs)
        act = conjugate(iso, build_operator(iso.fm1, a)).distance(build_operator(iso.fm2, iso.transport(a)))
        mult = abs(multiplier_norm(iso.fm1, a).value - multiplier_norm(iso.fm2, iso.transport(a)).value)
        for name, w, t in (("iso-unitary", _unitary_defect(transfer_unitary(iso)), 1e-12),
                           ("iso-action", act, 1e-10), ("iso-multiplier-norm", mult, 1e-10)):
            rows.append({"name": name, "worst": w, "tol": t, "passed": w <= t})
        rep.results["h"] = iso.h
    rep.tables["checks"] = rows
    rep.checks.update({r["name"]: bool(r["passed"]) for r in rows})
    rep.results["level"] = N


def _task_question_scan(spec, rep):
    """Data on ``||M(s(T))|| / ||T||`` for random T on twisted relations; no claim is made."""
    from .relation import FMRelation
    from .schur import multiplier_norm

    rng = np.random.default_rng(spec.seed)
    trials = int(spec.params.get("trials", 20))
    max_block = int(spec.params.get("max_block", 5))
    fixed = relation_from_json(spec.relation) if spec.relation is not None else None
    rows = []
    for t in range(trials):
        fm: FMRelation = fixed or random_fm_relation(rng, max_block=max_block, twisted=True)
        a = rng.normal(size=fm.n_pairs) + 1j * rng.normal(size=fm.n_pairs)
        T = build_operator(fm, a)
        opn = operator_norm(T)
        mn = multiplier_norm(fm, a)
        rows.append({
            "trial": t,
            "atoms": fm.n,
            "max_block": max(len(b) for b in fm.rel.blocks),
            "twisted": not fm.sigma.is_trivial(),
            "op_norm": opn,
            "sup_norm": sup_norm(a),
            "multiplier_norm": mn.value,
            "ratio": mn.value / opn if opn > 0 else 0.0,
        })
    rep.tables["scan"] = rows
    rep.results = {
        "trials": trials,
        "max_ratio": max((r["ratio"] for r in rows), default=0.0),
        "note": "reports data only; whether symbols of operators are always multipliers is not decided here",
    }


_HANDLERS = {
    "validate": _task_validate,
    "multiplier": _task_multiplier,
    "ehnorm": _task_ehnorm,
    "tower": _task_tower,
    "toeplitz": _task_toeplitz,
    "bridge": _task_bridge,
    "question-scan": _task_question_scan,
}


def run_suite(spec: ExperimentSpec) -> Report:
    rep = Report(spec.task, spec.digest())
    t0 = time.perf_counter()
    try:
        _HANDLERS[spec.task](spec, rep)
        rep.exit_code = EXIT_OK if all(rep.checks.values()) else EXIT_INVARIANT
    except SolverError as exc:
        rep.exit_code = EXIT_SOLVER
        rep.results["error"] = str(exc)
        rep.results["bracket"] = [exc.lower, exc.upper]
    rep.timings["total_seconds"] = time.perf_counter() - t0
    return rep


# ---------------------------------------------------------------------------
# argument parsing


def _read_relation(path):
    if path is None:
        return None
    errors = []
    obj = _load_json(path, errors, "/relation")
    if errors:
        raise SpecError(errors)
    return obj


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cartankit", description="Finite Cartan pair experiments.")
    p.add_argument("--version", action="version", version=f"cartankit {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--output", "-o", help="write the report here instead of stdout")
        sp.add_argument("--format", choices=("json", "csv"), default="json")
        sp.add_argument("--timings", action="store_true", help="include wall-clock timings (not byte-stable)")
        return sp

    common(sub.add_parser("run", help="run an experiment spec file")).add_argument("spec")
    common(sub.add_parser("validate", help="check a relation spec")).add_argument("relation")
    sp = common(sub.add_parser("multiplier", help="multiplier and cb norms of a symbol"))
    sp.add_argument("relation")
    sp.add_argument("--phi", required=True, help="JSON file, or ones | diagonal | random")
    sp.add_argument("--k-max", type=int, default=4)
    sp = common(sub.add_parser("ehnorm", help="gamma_2 norm of dense block patterns"))
    sp.add_argument("pattern", help="JSON file: a matrix or a list of matrices")
    sp = common(sub.add_parser("tower", help="dyadic tower invariant suite"))
    sp.add_argument("--level", type=int, required=True)
    sp = common(sub.add_parser("toeplitz", help="coset-ring decision and norm growth"))
    sp.add_argument("--set", required=True, dest="set_expr")
    sp.add_argument("--levels", default="2..6")
    sp = common(sub.add_parser("bridge", help="groupoid transfer and unitary suites"))
    sp.add_argument("--level", type=int, required=True)
    sp.add_argument("--iso", help="JSON file with rho, weights1, weights2")
    sp = common(sub.add_parser("question-scan", help="ratio data for operator symbols as multipliers"))
    sp.add_argument("relation", nargs="?")
    sp.add_argument("--trials", type=int, default=20)
    sp.add_argument("--max-block", type=int, default=5)
    return p


def _spec_from_args(args) -> ExperimentSpec:
    if args.command == "run":
        spec = parse_spec(args.spec)
        spec.seed = args.seed if args.seed else spec.seed
        return spec
    obj: dict = {"task": args.command, "seed": args.seed, "params": {}}
    if args.command in ("validate", "multiplier", "question-scan"):
        obj["relation"] = _read_relation(args.relation)
    if args.command == "multiplier":
        phi = args.phi
        obj["params"] = {"phi": phi if phi in ("ones", "diagonal", "random") else _read_json_file(phi, "/params/phi"),
                         "k_max": args.k_max}
    elif args.command == "ehnorm":
        obj["params"] = {"blocks": _read_json_file(args.pattern, "/params/blocks")}
    elif args.command == "tower":
        obj["params"] = {"level": args.level}
    elif args.command == "toeplitz":
        obj["params"] = {"set": args.set_expr, "levels": args.levels}
    elif args.command == "bridge":
        obj["params"] = {"level": args.level}
        if args.iso:
            obj["params"]["iso"] = _read_json_file(args.iso, "/params/iso")
    elif args.command == "question-scan":
        obj["params"] = {"trials": args.trials, "max_block": args.max_block}
    return spec_from_dict(obj)


def _read_json_file(path, pointer):
    errors = []
    obj = _load_json(path, errors, pointer)
    if errors:
        raise SpecError(errors)
    return obj


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = _spec_from_args(args)
        rep = run_suite(spec)
    except SpecError as exc:
        err = {"errors": [{"code": c, "pointer": p, "message": m} for c, p, m in exc.errors]}
        sys.stderr.write(json.dumps(err, indent=2, sort_keys=True) + "\n")
        return EXIT_INVARIANT
    text = rep.to_csv() if args.format == "csv" else rep.to_json(args.timings)
    out = args.output or spec.output
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
    return rep.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
