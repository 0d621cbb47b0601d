"""Command line runner.

Exit codes: 0 success/agreement, 1 verdict mismatch or undecided,
2 usage or configuration error, 3 numerical budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import fredholmlab as fl
from . import gallery, limitops, moduli
from .bandop import SCHEMA_VERSION, LatticeOperator, OperatorFormatError, operator_from_json
from .lattice import as_norm_tag

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE, EXIT_BUDGET = 0, 1, 2, 3
TASKS = ("moduli", "spectrum", "ladder", "tsemi", "gallery", "sweep")


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class ExperimentConfig:
    task: str
    op: str | None = None  # inline JSON or a file path
    gallery: list = field(default_factory=list)
    radii: list = field(default_factory=list)
    tol: float | None = None
    p: str = "2"
    m: int = 1
    m_max: int = 5
    eps: str = "auto"
    budget: int | None = None  # largest localization width in the ladder
    format: str = "json"
    out: str | None = None

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        if not isinstance(obj, dict):
            raise ConfigError("$", "config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        for key in obj:
            if key not in known:
                raise ConfigError(f"$.{key}", "unknown field")
        if "task" not in obj:
            raise ConfigError("$.task", "required")
        cfg = cls(**obj)
        cfg.validate()
        return cfg

    def validate(self):
        if self.task not in TASKS:
            raise ConfigError("$.task", f"must be one of {', '.join(TASKS)}")
        if isinstance(self.gallery, str):
            self.gallery = [self.gallery]
        if self.task != "gallery" and (self.op is None) == (not self.gallery):
            raise ConfigError("$.op", "give exactly one operator source: op or gallery")
        if self.task != "gallery" and len(self.gallery) > 1:
            raise ConfigError("$.gallery", "only one gallery case for this task")
        for i, name in enumerate(self.gallery):
            if name not in gallery.REGISTRY:
                raise ConfigError(f"$.gallery[{i}]", f"unknown case {name!r}")
        if isinstance(self.radii, str):
            self.radii = _parse_radii(self.radii)
        if any((not isinstance(r, int)) or r < 0 for r in self.radii):
            raise ConfigError("$.radii", "radii must be nonnegative integers")
        if self.task == "sweep" and self.radii and len(self.radii) < 3:
            raise ConfigError("$.radii", "a sweep needs at least 3 radii")
        try:
            as_norm_tag(self.p)
        except ValueError as exc:
            raise ConfigError("$.p", str(exc)) from None
        if self.task in ("sweep", "ladder", "tsemi", "spectrum") and as_norm_tag(self.p).p != 2:
            raise ConfigError("$.p", f"task {self.task} is computed at p = 2")
        if self.format not in ("json", "csv", "text"):
            raise ConfigError("$.format", "must be json, csv or text")
        if self.format == "csv" and self.task != "moduli":
            raise ConfigError("$.format", "csv output is only available for moduli")
        if self.m < 1 or self.m_max < 1:
            raise ConfigError("$.m", "must be positive")
        if self.eps != "auto":
            try:
                if float(self.eps) <= 0:
                    raise ValueError
            except (TypeError, ValueError):
                raise ConfigError("$.eps", "must be 'auto' or a positive number") from None
        if self.budget is not None and (not isinstance(self.budget, int) or self.budget < 4):
            raise ConfigError("$.budget", "must be an integer >= 4")
        if self.tol is not None and self.tol <= 0:
            raise ConfigError("$.tol", "must be positive")


def _parse_radii(text: str) -> list:
    try:
        return [int(r) for r in text.split(",") if r.strip()]
    except ValueError:
        raise ConfigError("$.radii", f"cannot parse {text!r}") from None


def load_operator(cfg: ExperimentConfig) -> LatticeOperator:
    if cfg.gallery:
        return gallery.build_example(cfg.gallery[0]).operator
    text = cfg.op.strip()
    try:
        if text.startswith("{"):
            return operator_from_json(json.loads(text))
        return operator_from_json(json.loads(Path(text).read_text()))
    except FileNotFoundError:
        raise ConfigError("$.op", f"no such file {text!r}") from None
    except OperatorFormatError as exc:
        raise ConfigError("$.op" + exc.path[1:], str(exc).split(": ", 1)[1]) from None
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError("$.op", f"invalid operator description: {exc}") from None


def _report(task: str, body: dict) -> dict:
    return {"schemaVersion": SCHEMA_VERSION, "task": task, **body}


def run_experiment(cfg: ExperimentConfig) -> tuple[int, str]:
    """Execute one task; returns (exit status, rendered output)."""
    tol = cfg.tol
    if cfg.task == "gallery":
        rep = gallery.run_gallery(tol if tol is not None else 1e-6, cfg.gallery or None)
        text = rep.to_text() if cfg.format == "text" else _dump(_report("gallery", rep.to_json()))
        return (EXIT_OK if rep.ok else EXIT_MISMATCH), text

    A = load_operator(cfg)
    expected = gallery.REGISTRY[cfg.gallery[0]][2] if cfg.gallery else {}
    status = EXIT_OK
    if cfg.task == "moduli":
        rep = moduli.moduli_report(A, cfg.radii or [8, 16, 32, 64], cfg.m_max, cfg.p)
        if cfg.format == "csv":
            return status, rep.to_csv()
        body = rep.to_json()
        text = rep.to_csv() if cfg.format == "text" else _dump(_report("moduli", body))
        return status, text
    if cfg.task == "spectrum":
        spec = limitops.operator_spectrum(A)
        adj = limitops.adjoint_spectrum_check(A)
        body = {"spectrum": spec.to_json(), "adjointCheck": {"equal": adj.equal, "missing": adj.missing}}
        if not adj.equal:
            status = EXIT_MISMATCH
        if cfg.format == "text":
            lines = [f"{o}: {B!r}" for o, B in zip(spec.origins, spec.representatives)]
            lines.append(f"adjoint check: {adj.equal}")
            return status, "\n".join(lines)
        return status, _dump(_report("spectrum", body))
    if cfg.task == "ladder":
        kw = {"radii": cfg.radii} if cfg.radii else {}
        lad = fl.check_conditions(A, budget=cfg.budget, tol=tol if tol is not None else 1e-6, **kw)
        if lad.conclusion == fl.UNDECIDED or lad.agreement is False:
            status = EXIT_MISMATCH
        if "fredholm" in expected and lad.fredholm is not expected["fredholm"]:
            status = EXIT_MISMATCH
        text = lad.to_text() if cfg.format == "text" else _dump(_report("ladder", lad.to_json()))
        return status, text
    if cfg.task == "tsemi":
        eps = "auto" if cfg.eps == "auto" else float(cfg.eps)
        kw = {"radii": cfg.radii} if cfg.radii else {}
        try:
            tr = fl.tsemi_trace(A, cfg.m, eps, cfg.p, **kw)
        except ValueError as exc:
            raise ConfigError("$.op", str(exc)) from None
        if not (tr.index_identity and tr.chain_holds):
            status = EXIT_MISMATCH
        if cfg.format == "text":
            text = (f"l = {tr.l} (smallest admissible {tr.l_min}), max defect {tr.max_defect:g}\n"
                    f"B: {tr.rows} x {tr.cols}, k = {tr.k}, index identity {tr.index_identity}\n"
                    f"s^l_m(B) = {tr.s_l_B:.12g}, estimate s^l_m(A) = {tr.s_l_A:.12g}, "
                    f"chain slack {tr.chain_slack:.3g}")
            return status, text
        return status, _dump(_report("tsemi", tr.to_json()))
    if cfg.task == "sweep":
        sv = moduli.truncation_sweep_classify(A, cfg.radii or [8, 16, 32, 64], tol if tol is not None else 1e-6)
        if sv.verdict == moduli.UNDECIDED:
            status = EXIT_MISMATCH
        if "class" in expected and sv.verdict != expected["class"]:
            status = EXIT_MISMATCH
        if cfg.format == "text":
            return status, (f"{sv.verdict}: kernel {sv.kernel_dim}, cokernel {sv.cokernel_dim}\n"
                            f"kernel counts {sv.kernel.counts}, cokernel counts {sv.cokernel.counts}")
        return status, _dump(_report("sweep", sv.to_json()))
    raise ConfigError("$.task", f"unknown task {cfg.task!r}")


def _dump(obj) -> str:
    return json.dumps(moduli._jsonable(obj), sort_keys=True, indent=2)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bandlab", description="Fredholm diagnostics for band operators")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_op=True):
        if needs_op:
            p.add_argument("--op", help="operator JSON file or inline JSON")
        p.add_argument("--gallery", action="append", default=[], help="gallery case name")
        p.add_argument("--radii", help="comma separated radii, e.g. 8,16,32,64")
        p.add_argument("--p", default="2", help="1, 2 or inf")
        p.add_argument("--tol", type=float)
        p.add_argument("--out", help="write the report here instead of stdout")
        p.add_argument("--format", choices=("json", "csv", "text"), default="json")

    for name, helptext in (("moduli", "j, q and lower singular values per radius"),
                           ("spectrum", "operator spectrum and the adjoint check"),
                           ("ladder", "limit-operator condition ladder"),
                           ("check", "alias of ladder"),
                           ("tsemi", "trace of the semi-Fredholm argument"),
                           ("sweep", "truncation-sweep classification")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        if name == "moduli":
            p.add_argument("--m", type=int, default=5, help="number of lower singular values")
        if name in ("ladder", "check"):
            p.add_argument("--budget", type=int, help="largest localization width")
        if name == "tsemi":
            p.add_argument("--m", type=int, default=1)
            p.add_argument("--eps", default="auto")
    p = sub.add_parser("gallery", help="run the gallery")
    common(p, needs_op=False)
    p.add_argument("--export", help="write every selected case as operator JSON into this directory")
    p = sub.add_parser("run", help="run an experiment config file")
    p.add_argument("config")
    return parser


def _config_from_args(args) -> ExperimentConfig:
    task = "ladder" if args.command == "check" else args.command
    cfg = ExperimentConfig(task=task, op=getattr(args, "op", None), gallery=list(args.gallery),
                           radii=_parse_radii(args.radii) if args.radii else [], tol=args.tol, p=args.p,
                           format=args.format, out=args.out)
    if task == "moduli":
        cfg.m_max = args.m
    if task == "tsemi":
        cfg.m, cfg.eps = args.m, args.eps
    if task == "ladder":
        cfg.budget = args.budget
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        if args.command == "run":
            try:
                obj = json.loads(Path(args.config).read_text())
            except (OSError, ValueError) as exc:
                raise ConfigError("$", f"cannot read config: {exc}") from None
            cfg = ExperimentConfig.from_dict(obj)
        else:
            cfg = _config_from_args(args)
        if args.command == "gallery" and args.export:
            out = Path(args.export)
            out.mkdir(parents=True, exist_ok=True)
            for name in cfg.gallery or sorted(gallery.REGISTRY):
                gallery.export_case(name, out / f"{name}.json")
        status, text = run_experiment(cfg)
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except fl.BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    if cfg.out:
        Path(cfg.out).write_text(text if text.endswith("\n") else text + "\n")
    else:
        print(text)
    return status


if __name__ == "__main__":
    sys.exit(main())
