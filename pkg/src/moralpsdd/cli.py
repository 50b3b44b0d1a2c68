"""Command-line workflow: compile, fit, learn-utility, blame, verify and helpers.

Every run is also recorded under a session directory (``$MORALPSDD_SESSION``,
default ``./moralpsdd-session``): one numbered subdirectory per command with
its arguments, its standard output and copies of the files it wrote.
"""

from __future__ import annotations

import argparse
import os
import shutil
import sys
from pathlib import Path

from . import blame as B
from . import data as D
from . import psdd as P
from . import sdd as S
from .errors import MoralPsddError, ParseError, QueryError
from .logic import parse_scenario, scenario_to_text
from .model import Bundle, load_bundle, save_bundle
from .utility import UtilitySpec, learn_utility, load_utility, save_utility
from .vtree import to_text as vtree_text

SESSION_ENV = "MORALPSDD_SESSION"
DEFAULT_SESSION = "moralpsdd-session"
GENERATORS = ("lung_cancer", "trolley", "teamwork", "planted")


class Run:
    """Collects stdout and written files so they can be mirrored into the session."""

    def __init__(self, argv, stdout=None):
        self.argv = list(argv)
        self.stdout = stdout or sys.stdout
        self.lines: list[str] = []
        self.files: list[Path] = []

    def say(self, text: str = "") -> None:
        text = text if text.endswith("\n") else text + "\n"
        self.stdout.write(text)
        self.lines.append(text)

    def wrote(self, path) -> Path:
        path = Path(path)
        self.files.append(path)
        return path

    def record(self, root: Path, command: str) -> Path:
        root.mkdir(parents=True, exist_ok=True)
        taken = [int(p.name.split("-", 1)[0]) for p in root.iterdir()
                 if p.is_dir() and p.name.split("-", 1)[0].isdigit()]
        d = root / f"{(max(taken) + 1 if taken else 1):04d}-{command}"
        d.mkdir()
        (d / "command.txt").write_text(" ".join(self.argv) + "\n")
        (d / "stdout.txt").write_text("".join(self.lines))
        for f in self.files:
            if f.exists():
                shutil.copyfile(f, d / f.name)
        return d


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _scenario_from(arg: str):
    path = Path(arg)
    if path.exists():
        return parse_scenario(path.read_text(), name=None)
    if arg in D.BUILTIN:
        return D.builtin_scenario(arg)
    raise ParseError(f"no scenario file {arg!r} (builtin names: {', '.join(D.BUILTIN)})")


def _evidence(items) -> dict:
    ev = {}
    for item in items or ():
        k, sep, v = item.partition("=")
        if not sep or v not in ("0", "1"):
            raise QueryError(f"evidence must look like VAR=0 or VAR=1, got {item!r}")
        ev[k] = int(v)
    return ev


def parse_contexts(text: str, scenario) -> B.ContextDistribution:
    """Context file: ``model``, ``given V=1 ...``, or lines of ``bits weight`` /
    ``VAR VAR ... weight`` (the context indicators that are on)."""
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines or lines == ["model"]:
        return B.ContextDistribution.model()
    if lines[0].startswith("given"):
        return B.ContextDistribution.conditioned(_evidence(lines[0].split()[1:]))
    table: dict = {}
    named: dict = {}
    for ln in lines:
        *keys, wt = ln.split()
        try:
            w = float(wt)
        except ValueError:
            raise ParseError(f"bad context weight in {ln!r}") from None
        if len(keys) == 1 and set(keys[0]) <= {"0", "1"} and len(keys[0]) == len(scenario.contexts):
            table[tuple(int(c) for c in keys[0])] = w
        else:
            named[" ".join(keys)] = w
    if named:
        extra = B.contexts_from_names(scenario, named)
        table.update(dict(extra.table))
    return B.ContextDistribution.explicit(table)


def _default_out(arg: str, suffix: str) -> Path:
    return Path(Path(arg).stem + suffix)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_compile(a, run: Run) -> int:
    scenario = _scenario_from(a.scenario)
    sdd = S.compile_scenario(scenario, strategy=a.vtree)
    out = Path(a.out) if a.out else _default_out(a.scenario, ".sdd")
    save_bundle(Bundle(scenario, sdd), run.wrote(out))
    vt = run.wrote(out.with_suffix(".vtree"))
    vt.write_text(vtree_text(sdd.vtree) + "\n")
    run.say(f"model count: {S.model_count(sdd)}")
    run.say(f"circuit size: {sdd.size()} ({len(sdd)} nodes)")
    run.say(f"wrote {out} and {vt}")
    return 0


def cmd_fit(a, run: Run) -> int:
    b = load_bundle(a.circuit)
    data = D.load_dataset(a.data, b.scenario)
    p = P.fit_parameters(b.sdd, data, a.smoothing, a.structure)
    out = Path(a.out) if a.out else _default_out(a.circuit, ".psdd")
    save_bundle(Bundle(b.scenario, b.sdd, p), run.wrote(out))
    run.say(f"fitted {len(p)} nodes on {len(data)} rows (smoothing {a.smoothing:g}, {a.structure})")
    run.say(f"log-likelihood: {P.log_likelihood(p, data):.6f}")
    run.say(f"wrote {out}")
    return 0


def cmd_learn_utility(a, run: Run) -> int:
    from .report import plot_utility

    b = load_bundle(a.model, need_psdd=True)
    spec = UtilitySpec(context_relative=a.context_relative, linear=not a.tabular, regularization=a.lam)
    u = learn_utility(b.psdd, b.scenario, spec)
    out = Path(a.out) if a.out else _default_out(a.model, ".util")
    save_utility(u, run.wrote(out))
    if u.linear and not u.context_relative:
        for v, w in zip(u.outcomes, u.weights[None]):
            run.say(f"{v}\t{float(w):.6f}")
    for f in u.flags:
        run.say(f"note: {f}")
    if not a.no_plot:
        run.say(f"wrote {plot_utility(u, run.wrote(out.with_suffix('.png')))}")
    run.say(f"wrote {out}")
    return 0


def _interactive_queries(scenario, stdin, run: Run) -> list:
    def ask(prompt, default=None):
        run.stdout.write(prompt + (f" [{default}]" if default is not None else "") + ": ")
        run.stdout.flush()
        line = stdin.readline()
        if not line:
            return None
        return line.strip() or default

    groups = [" ".join(g) for g in scenario.action_groups]
    run.say("action groups: " + "; ".join(groups))
    queries = []
    while True:
        act = ask("action (blank to finish)")
        if not act:
            return queries
        event = ask("event formula")
        alts = ask("alternatives (blank for all)", "")
        n = ask("N (blank for automatic)", "")
        queries.append(B.BlameQuery(act, event, tuple(alts.split()), float(n) if n else None))


def cmd_blame(a, run: Run) -> int:
    from .report import plot_blame

    b = load_bundle(a.model, need_psdd=True)
    u = load_utility(a.utility, b.scenario)
    if a.interactive:
        queries = _interactive_queries(b.scenario, sys.stdin, run)
    else:
        if not a.queries:
            raise QueryError("a query file is required unless --interactive is given")
        queries = B.parse_queries(Path(a.queries).read_text(), b.scenario)
    ctx = parse_contexts(Path(a.contexts).read_text(), b.scenario) if a.contexts else None
    prefix = Path(a.out) if a.out else None
    tsv = [ "\t".join(("query",) + B.TSV_FIELDS) ]
    for i, q in enumerate(queries, 1):
        if ctx is not None:
            q.contexts = ctx
        if a.N is not None:
            q.N = a.N
        r = B.run_query(b.psdd, b.scenario, u, q)
        run.say(B.report_text(r))
        for row in B.report_rows(r):
            tsv.append("\t".join([str(i)] + [repr(x) if isinstance(x, float) else str(x) for x in row]))
        if prefix is not None and not a.no_plot and r.pairs:
            run.wrote(plot_blame(r, f"{prefix}-{i}.png"))
    if prefix is not None:
        prefix.parent.mkdir(parents=True, exist_ok=True)
        run.wrote(prefix.with_name(prefix.name + ".txt")).write_text("".join(run.lines))
        run.wrote(prefix.with_name(prefix.name + ".tsv")).write_text("\n".join(tsv) + "\n")
    return 0


def cmd_verify(a, run: Run) -> int:
    from .oracle import verify_agreement

    b = load_bundle(a.model, need_psdd=True)
    u = load_utility(a.utility, b.scenario) if a.utility else None
    dev = verify_agreement(b.psdd, b.scenario, u, seed=a.seed, queries=a.queries)
    mism = dev.pop("mpe_assignment_mismatches")
    for k, v in dev.items():
        run.say(f"{k}\t{v:.3e}")
    worst = max(dev.values())
    run.say(f"mpe assignment mismatches: {mism}")
    ok = worst <= a.tol and mism == 0
    run.say(f"max deviation {worst:.3e} {'<=' if ok else '>'} {a.tol:g}: {'ok' if ok else 'FAILED'}")
    return 0 if ok else 9


def cmd_generate(a, run: Run) -> int:
    if a.domain == "lung_cancer":
        params = D.LungCancerParameters(adherence=a.adherence)
        data = D.generate_lung_cancer(a.n, a.seed, params)
    elif a.domain == "trolley":
        data = D.generate_trolley(a.n, a.seed)
    elif a.domain == "teamwork":
        data = D.generate_teamwork(a.n, a.seed)
    else:
        prob = D.planted_problem(a.seed)
        data = D.generate_planted(prob, a.n, a.seed)
        if a.scenario_out:
            run.wrote(a.scenario_out).write_text(scenario_to_text(prob.scenario))
    out = Path(a.out) if a.out else Path(f"{a.domain}.csv")
    D.save_dataset(data, run.wrote(out))
    run.say(f"wrote {len(data)} rows to {out}")
    return 0


def cmd_infer(a, run: Run) -> int:
    b = load_bundle(a.model, need_psdd=True)
    ev = _evidence(a.evidence)
    if a.query:
        q = _evidence(a.query)
        run.say(f"Pr({_fmt_ev(q)} | {_fmt_ev(ev)}) = {P.conditional(b.psdd, q, ev)!r}")
    else:
        run.say(f"Pr({_fmt_ev(ev)}) = {P.marginal(b.psdd, ev)!r}")
    return 0


def cmd_mpe(a, run: Run) -> int:
    b = load_bundle(a.model, need_psdd=True)
    w, pr = P.mpe(b.psdd, _evidence(a.evidence))
    run.say(f"probability {pr!r}")
    run.say(" ".join(v for v in b.scenario.variables if w[v]) or "(all false)")
    return 0


def cmd_scenario(a, run: Run) -> int:
    run.say(D.scenario_text(a.name).rstrip("\n"))
    return 0


def _fmt_ev(ev) -> str:
    return ", ".join(f"{k}={v}" for k, v in ev.items()) or "true"


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="moralpsdd", description=__doc__.split("\n")[0])
    ap.add_argument("--session", help=f"session directory (default ${SESSION_ENV} or ./{DEFAULT_SESSION})")
    ap.add_argument("--no-session", action="store_true", help="do not record this run")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="compile a scenario into a circuit")
    p.add_argument("scenario", help="scenario file or builtin name")
    p.add_argument("--vtree", choices=("balanced", "right-linear"), default="balanced")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("fit", help="learn PSDD parameters from a CSV dataset")
    p.add_argument("circuit")
    p.add_argument("data")
    p.add_argument("--smoothing", type=float, default=P.DEFAULT_SMOOTHING)
    p.add_argument("--structure", choices=("unfolded", "shared"), default="unfolded")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("learn-utility", help="learn a utility function from a fitted model")
    p.add_argument("model")
    form = p.add_mutually_exclusive_group()
    form.add_argument("--linear", action="store_true", help="linear form (default)")
    form.add_argument("--tabular", action="store_true", help="one value per outcome assignment")
    p.add_argument("--context-relative", action="store_true")
    p.add_argument("--lambda", dest="lam", type=float, default=1e-3, help="ridge penalty")
    p.add_argument("--no-plot", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_learn_utility)

    p = sub.add_parser("blame", help="answer blameworthiness queries")
    p.add_argument("model")
    p.add_argument("utility")
    p.add_argument("queries", nargs="?")
    p.add_argument("--contexts", help="context distribution file")
    p.add_argument("--N", type=float, help="cost importance for every query")
    p.add_argument("--interactive", action="store_true", help="prompt for queries on stdin")
    p.add_argument("--out", help="prefix for .txt/.tsv reports and .png figures")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_blame)

    p = sub.add_parser("verify", help="compare the circuit path against the brute-force oracle")
    p.add_argument("model")
    p.add_argument("utility", nargs="?")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--queries", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("generate", help="sample a synthetic dataset")
    p.add_argument("domain", choices=GENERATORS)
    p.add_argument("-n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--adherence", type=float, default=0.9, help="lung cancer only")
    p.add_argument("--scenario-out", help="planted only: write the generated scenario here")
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("infer", help="marginal or conditional probability")
    p.add_argument("model")
    p.add_argument("--evidence", nargs="*", default=[])
    p.add_argument("--query", nargs="*")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("mpe", help="most probable complete assignment")
    p.add_argument("model")
    p.add_argument("--evidence", nargs="*", default=[])
    p.set_defaults(func=cmd_mpe)

    p = sub.add_parser("scenario", help="print a builtin scenario description")
    p.add_argument("name", choices=D.BUILTIN)
    p.set_defaults(func=cmd_scenario)
    return ap


def _session_dir(a) -> Path | None:
    if a.no_session:
        return None
    if a.session:
        return Path(a.session)
    env = os.environ.get(SESSION_ENV)
    if env is not None:
        return Path(env) if env else None
    return Path(DEFAULT_SESSION)


def main(argv=None, stdout=None, stderr=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    stderr = stderr or sys.stderr
    a = build_parser().parse_args(argv)
    run = Run(["moralpsdd"] + argv, stdout)
    try:
        code = a.func(a, run)
    except MoralPsddError as e:
        stderr.write(f"error E{e.exit_code} {type(e).__name__}: {e}\n")
        code = e.exit_code
    except (OSError, ValueError) as e:
        stderr.write(f"error E1 {type(e).__name__}: {e}\n")
        code = 1
    session = _session_dir(a)
    if session is not None:
        run.record(session, a.command)
    return code


if __name__ == "__main__":
    sys.exit(main())
