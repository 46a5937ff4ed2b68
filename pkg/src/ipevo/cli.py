"""Command-line interface: sampling, evolutions, de-Poissonization, verification and reports.

Every output carries a header with the package version, a hash of the
effective configuration and the seed.  Files are written to a temporary
name and renamed into place.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .randkit import InvalidInput, RandomStream, parse_seed

EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class ExperimentConfig:
    """Flat configuration mirroring the command-line flags."""

    command: str = ""
    target: str = ""
    alpha: float = 0.5
    method: str = "kernel"
    type: int = 1
    levels: str = "0:0.5:0.1"
    u_grid: str = "0:1:0.1"
    init: str = "pdip:a0"
    variant: str = "aa"
    eps: float | None = None
    z_cutoff: float | None = None
    n: int = 1
    n_scale: float = 1.0
    seed: str = "0"
    out: str | None = None
    input: str | None = None
    stats: list = field(default_factory=list)
    delta: float = 0.0
    z0: float = 1.0
    b: float = 1.0
    times: str = "0:1:0.1"
    threads: int | None = None
    timings: bool = False

    def validate(self):
        if not 0 < self.alpha < 1:
            raise InvalidInput(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.method not in ("kernel", "scaffold"):
            raise InvalidInput(f"method must be 'kernel' or 'scaffold', got {self.method!r}")
        if self.type not in (0, 1):
            raise InvalidInput("type must be 0 or 1")
        if self.n < 1:
            raise InvalidInput("n must be at least 1")
        if not self.n_scale > 0:
            raise InvalidInput("n_scale must be positive")
        for name in ("eps", "z_cutoff"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise InvalidInput(f"{name} must be positive")
        if self.threads is not None and self.threads < 1:
            raise InvalidInput("threads must be at least 1")
        parse_seed(self.seed)
        return self

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        known = {f.name for f in fields(cls)}
        bad = sorted(set(data) - known)
        if bad:
            raise InvalidInput(f"unknown config keys {bad}")
        return cls(**data)

    def digest(self):
        body = {k: v for k, v in asdict(self).items() if k not in ("out", "threads", "timings")}
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:16]

    def header(self):
        return {"version": __version__, "config_hash": self.digest(), "seed": str(parse_seed(self.seed))}

    @property
    def stream(self):
        return RandomStream(parse_seed(self.seed))


# -- parsing ---------------------------------------------------------------------

def parse_grid(text):
    """``start:stop:step`` (stop included when on the grid) or a comma list."""
    text = str(text).strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise InvalidInput(f"grid {text!r} must be start:stop:step")
        a, b, h = map(float, parts)
        if not h > 0 or b < a:
            raise InvalidInput(f"bad grid {text!r}")
        k = int(np.floor((b - a) / h + 1e-9))
        return np.round(a + h * np.arange(k + 1), 12)
    vals = np.array([float(v) for v in text.split(",") if v.strip()])
    if not len(vals):
        raise InvalidInput("empty grid")
    return vals


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n\n{self.format_help()}")


def _common(p, *names):
    opts = {
        "alpha": dict(type=float, help="stability index in (0, 1)"),
        "seed": dict(type=str, help="64-bit seed, decimal or 0x-hex"),
        "n": dict(type=int, help="number of replicates"),
        "out": dict(help="output path (stdout when omitted, where allowed)"),
        "eps": dict(type=float, help="mass truncation level"),
        "method": dict(choices=["kernel", "scaffold"]),
        "type": dict(type=int, choices=[0, 1]),
        "levels": dict(help="level grid, start:stop:step or a comma list"),
        "init": dict(help="initial state: pdip:a0, pdip:aa, block:B, empty or file:PATH"),
        "z_cutoff": dict(type=float, help="spindle lifetime cutoff of the scaffold"),
        "threads": dict(type=int, help="accepted for compatibility; runs are single-threaded"),
    }
    for name in names:
        p.add_argument("--" + name.replace("_", "-"), dest=name, default=None, **opts[name])


def build_parser():
    p = _Parser(prog="ipevo", description="Interval-partition evolutions with Poisson-Dirichlet stationary laws.")
    p.add_argument("--config", help="JSON file with a flat schema mirroring the flags")
    p.add_argument("--version", action="version", version=f"ipevo {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("sample", help="draw PDIPs, BESQ paths, spindles or clades")
    s.add_argument("target", choices=["pdip", "besq", "spindle", "clade"])
    _common(s, "alpha", "seed", "n", "out", "eps", "z_cutoff", "threads")
    s.add_argument("--variant", choices=["aa", "a0"], default=None)
    s.add_argument("--delta", type=float, default=None, help="BESQ dimension")
    s.add_argument("--z0", type=float, default=None, help="BESQ or spindle starting value")
    s.add_argument("--b", type=float, default=None, help="initial block mass of a clade")
    s.add_argument("--times", default=None, help="time grid for BESQ paths and spindles")

    e = sub.add_parser("evolve", help="simulate type-1 or type-0 evolutions; writes a trace CSV")
    _common(e, "alpha", "seed", "n", "out", "eps", "method", "type", "levels", "init", "z_cutoff", "threads")

    d = sub.add_parser("depoissonize", help="de-Poissonized traces on a u-grid")
    _common(d, "alpha", "seed", "n", "out", "eps", "type", "init", "threads")
    d.add_argument("--u-grid", dest="u_grid", default=None)
    d.add_argument("--in", dest="input", default=None, help="trace CSV to de-Poissonize instead of simulating")

    v = sub.add_parser("verify", help="run verification suites")
    v.add_argument("target", choices=["all", "clades", "kernels", "pseudostat", "stationarity", "conjecture",
                                      "partitions"])
    _common(v, "alpha", "seed", "out", "threads")
    v.add_argument("--n", type=int, default=None, help="sample size of the clade statistics")
    v.add_argument("--n-scale", dest="n_scale", type=float, default=None, help="multiply every sample size")
    v.add_argument("--stats", default=None, help="clade statistic ids, comma separated")
    v.add_argument("--timings", action="store_true", default=None, help="fill the runtime column of the summary")

    r = sub.add_parser("report", help="SVG histograms from a trace CSV or a verify directory")
    r.add_argument("--input", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--stats", default=None, help="trace columns to plot, comma separated")
    r.add_argument("--seed", default=None)
    return p


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.config:
        with open(args.config) as fh:
            cfg = ExperimentConfig.from_json(fh.read())
    for k, v in vars(args).items():
        if k == "config" or v is None:
            continue
        if k == "stats" and isinstance(v, str):
            v = [s.strip() for s in v.split(",") if s.strip()]
        setattr(cfg, k, v)
    return cfg.validate()


# -- output ----------------------------------------------------------------------

def atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(cfg, text):
    if cfg.out:
        atomic_write(cfg.out, text)
    else:
        sys.stdout.write(text)


def _csv(header, columns, rows):
    buf = io.StringIO()
    buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def _plain(obj):
    from .statlab import _plain as plain
    return plain(obj)


# -- commands --------------------------------------------------------------------

def _initial(cfg, rng, eps):
    from .batch import PartitionBatch
    from .partition import IntervalPartition
    from .pdip import pdip_batch
    kind, _, arg = cfg.init.partition(":")
    if kind == "pdip":
        if arg not in ("aa", "a0"):
            raise InvalidInput("init pdip:VARIANT needs aa or a0")
        return pdip_batch(rng, cfg.alpha, arg, cfg.n, eps)
    if kind == "block":
        b = float(arg or 1.0)
        if not b > 0:
            raise InvalidInput("block mass must be positive")
        return PartitionBatch.single_blocks(np.full(cfg.n, b), cfg.alpha)
    if kind == "empty":
        return PartitionBatch.empty(cfg.n, cfg.alpha)
    if kind == "file":
        with open(arg) as fh:
            beta = IntervalPartition.from_json(fh.read())
        return PartitionBatch.repeat(beta.replace(alpha=cfg.alpha), cfg.n)
    raise InvalidInput(f"unknown init {cfg.init!r}")


def cmd_sample(cfg):
    from .pdip import pdip_batch
    from .scaffold import build_clade
    from .spindle import besq_path, sample_besq_neg_spindle
    head = cfg.header()
    stream = cfg.stream
    lines = []
    if cfg.target == "pdip":
        eps = cfg.eps if cfg.eps is not None else 1e-8
        b = pdip_batch(stream.child("pdip").generator(), cfg.alpha, cfg.variant, cfg.n, eps)
        for p in b.partitions():
            lines.append({"meta": head, **p.replace(total_mass=1.0).to_dict()})
    elif cfg.target == "besq":
        grid = parse_grid(cfg.times)
        for i in range(cfg.n):
            f = besq_path(stream.child("besq", i), cfg.delta, cfg.z0, grid)
            vals = [float(f.value_at(t)) if t <= f.lifetime else 0.0 for t in grid]
            lines.append({"meta": head, "delta": cfg.delta, "z0": cfg.z0, "times": grid.tolist(), "values": vals,
                          "lifetime": float(f.lifetime)})
    elif cfg.target == "spindle":
        grid = parse_grid(cfg.times)
        for i in range(cfg.n):
            f = sample_besq_neg_spindle(stream.child("spindle", i), cfg.alpha, cfg.z0, grid)
            lines.append({"meta": head, "lifetime": float(f.lifetime), "times": list(map(float, f.times)),
                          "values": list(map(float, f.values))})
    else:
        for i in range(cfg.n):
            c = build_clade(stream.child("clade", i), cfg.alpha, cfg.b, cfg.z_cutoff)
            lines.append({"meta": head, "b": cfg.b, "jumps": len(c.times), "T": float(c.T),
                          "maximum": c.maximum, "initial_lifetime": float(c.lifetimes[0])})
    _emit(cfg, "".join(json.dumps(_plain(x), sort_keys=True) + "\n" for x in lines))
    return EXIT_OK


def cmd_evolve(cfg):
    from . import kernel, scaffold
    from .pdip import suggested_eps
    from .trace import TRACE_COLUMNS
    levels = parse_grid(cfg.levels)
    eps = cfg.eps if cfg.eps is not None else suggested_eps(cfg.alpha)
    rng = cfg.stream.child("evolve").generator()
    start = _initial(cfg, rng, eps)
    if cfg.method == "kernel":
        tr = kernel.evolve_batch(rng, cfg.alpha, start, levels, cfg.type, eps)
    else:
        run = scaffold.type1_batch if cfg.type == 1 else scaffold.type0_batch
        tr = run(rng, cfg.alpha, start, levels, z_cutoff=cfg.z_cutoff, eps=eps)
    _emit(cfg, _csv(cfg.header(), TRACE_COLUMNS, tr.rows()))
    return EXIT_OK


def _depoissonize_csv(cfg):
    """Time change of each replicate of a trace CSV; statistics are normalized by the mass."""
    from .depois import TimeChange
    from .trace import TRACE_COLUMNS
    rows = _read_csv(cfg.input)
    reps = {}
    for r in rows:
        reps.setdefault(int(r["replicate"]), []).append(r)
    out = []
    for i in sorted(reps):
        rr = sorted(reps[i], key=lambda r: float(r["level"]))
        y = np.array([float(r["level"]) for r in rr])
        m = np.array([float(r["total_mass"]) for r in rr])
        if m[0] <= 0:
            raise InvalidInput(f"replicate {i} starts empty")
        tc = TimeChange.from_masses(y, m)
        for k, u in enumerate(tc.integral):
            c = 1.0 / m[k]
            r = rr[k]
            out.append((i, float(y[k]), 1.0, int(r["block_count"]), float(r["leftmost_mass"]) * c,
                        float(r["largest_mass"]) * c, float(r["diversity_total"]) * c**cfg.alpha, float(u),
                        float(y[k])))
    return _csv(cfg.header(), TRACE_COLUMNS + ("u", "level_at_u"), out)


def cmd_depoissonize(cfg):
    if cfg.input:
        _emit(cfg, _depoissonize_csv(cfg))
        return EXIT_OK
    from .depois import depoissonized_at
    from .pdip import suggested_eps
    from .trace import TRACE_COLUMNS, summarize
    u = parse_grid(cfg.u_grid)
    eps = cfg.eps if cfg.eps is not None else suggested_eps(cfg.alpha)
    rng = cfg.stream.child("depoissonize").generator()
    out, _, _ = depoissonized_at(rng, cfg.alpha, _initial(cfg, rng, eps), u, cfg.type, eps=eps)
    cols = {uu: summarize(out[uu]) for uu in out}
    rows = []
    for i in range(cfg.n):
        for uu in sorted(out):
            c = cols[uu]
            rows.append((i, float(uu), float(c["total_mass"][i]), int(c["block_count"][i]),
                         float(c["leftmost_mass"][i]), float(c["largest_mass"][i]), float(c["diversity_total"][i])))
    names = ("replicate", "u") + TRACE_COLUMNS[2:]
    _emit(cfg, _csv(cfg.header(), names, rows))
    return EXIT_OK


def _safe(name):
    return "".join(c if c.isalnum() or c in "-." else "_" for c in name)


def cmd_verify(cfg):
    from . import statlab
    from .scaffold import clade_statistics
    stream = cfg.stream
    if cfg.target == "clades" and (cfg.stats or cfg.n > 1):
        spec = {"n": cfg.n if cfg.n > 1 else 10_000}
        if cfg.stats:
            spec["stats"] = cfg.stats
        reports = statlab.holm(clade_statistics(stream, cfg.alpha, spec))
    else:
        reports = statlab.run_suite(cfg.target, stream, cfg.alpha, cfg.n_scale)
    head = cfg.header()
    for r in reports:
        print(r.line())
    docs = [{"meta": head, **r.to_dict()} for r in reports]
    rows = []
    for r in reports:
        p = r.p_value
        if p is None and r.z_score is not None:
            # two-sided normal p-value of a z-test
            p = math.erfc(abs(r.z_score) / math.sqrt(2))
        rows.append((r.id, "" if r.passed is None else str(bool(r.passed)).lower(),
                     "" if p is None else float(p), r.n, float(r.runtime) if cfg.timings else "NA"))
    summary = _csv(head, ("test_id", "pass", "p", "N", "runtime"), rows)
    if cfg.out and cfg.out.endswith(".json"):
        atomic_write(cfg.out, json.dumps(docs, sort_keys=True, indent=1) + "\n")
    elif cfg.out:
        for doc in docs:
            atomic_write(os.path.join(cfg.out, _safe(doc["id"]) + ".json"), json.dumps(doc, sort_keys=True, indent=1)
                         + "\n")
        atomic_write(os.path.join(cfg.out, "summary.csv"), summary)
    else:
        sys.stdout.write(summary)
    failed = any(r.kind == "test" and r.passed is False for r in reports)
    return EXIT_FAILED if failed else EXIT_OK


def _read_csv(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _svg(fig, path):
    import matplotlib.pyplot as plt
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    atomic_write(path, buf.getvalue())


def cmd_report(cfg):
    import matplotlib
    matplotlib.use("svg")
    matplotlib.rcParams["svg.hashsalt"] = "ipevo"
    import matplotlib.pyplot as plt
    src = cfg.input
    written = []
    if os.path.isdir(src):
        rows = _read_csv(os.path.join(src, "summary.csv"))
        ps = np.array([float(r["p"]) for r in rows if r["p"] not in ("", "NA") and 0 <= float(r["p"]) <= 1])
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.hist(ps, bins=np.linspace(0, 1, 21), histtype="step")
        ax.set_xlabel("p-value")
        ax.set_ylabel("tests")
        ax.set_title(f"{len(rows)} tests, {sum(r['pass'] == 'false' for r in rows)} failed")
        path = os.path.join(cfg.out, "pvalues.svg")
        _svg(fig, path)
        written.append(path)
    else:
        rows = _read_csv(src)
        if not rows:
            raise InvalidInput("empty trace")
        stats = cfg.stats or ["total_mass", "leftmost_mass", "largest_mass"]
        key = "level" if "level" in rows[0] else "u"
        last = max(float(r[key]) for r in rows)
        final = [r for r in rows if float(r[key]) == last]
        for st in stats:
            if st not in rows[0]:
                raise InvalidInput(f"no column {st!r} in {src}")
            x = np.array([float(r[st]) for r in final])
            fig, ax = plt.subplots(figsize=(5, 3.5))
            ax.hist(x, bins=40, histtype="step", density=True)
            ax.set_xlabel(st)
            ax.set_ylabel("density")
            ax.set_title(f"{key} = {last:g}, {len(x)} replicates")
            path = os.path.join(cfg.out, f"{st}.svg")
            _svg(fig, path)
            written.append(path)
    for p in written:
        print(p)
    return EXIT_OK


COMMANDS = {"sample": cmd_sample, "evolve": cmd_evolve, "depoissonize": cmd_depoissonize, "verify": cmd_verify,
            "report": cmd_report}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(args)
        return COMMANDS[cfg.command](cfg)
    except UsageError as exc:
        print(f"ipevo: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvalidInput, ValueError) as exc:
        print(f"ipevo: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"ipevo: I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
