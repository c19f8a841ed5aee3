"""Command-line entry point.

Every subcommand writes a deterministic document (JSON with "schema": 1, or
CSV of complex floats) to --out or stdout.  Exit codes: 0 pass, 1 invariant
violation, 2 usage.  A key = value config file supplies defaults that flags
override.
"""

from __future__ import annotations

import csv
import io
import json
import sys
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import click

from . import characters as chars
from .cyclo import CycNum, Phase
from .fusion import (
    FUSION_METHODS, InvariantViolation, ReductionError, TelescopingError,
    UnsupportedFusion, fusion_table, groth_fuse, parse_label,
)
from .modular import (
    SMatrix, bp_entry, bp_smatrix, bp_tmatrix, check_galois_permutation, check_galois_relation,
    sl3_adm_smatrix_full, sl3_tmatrix, wzw_smatrix,
)
from .weights import (
    ALPHA3, OMEGA1, AdmissibleWeight, AffineWeight, admissible_from_family, admissible_weights,
    bilinear, bp_charge, bp_weight, c_bp, dynkin, enumerate_P, level,
)

SCHEMA = 1
FORMATS = ("json", "csv")
ALGEBRAS = ("wzw", "bp", "sl3-adm")
SUITES = ("all", "modular", "fusion", "characters", "galois", "s-transform")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    u: int = 5
    order: int = chars.DEFAULT_ORDER
    tolerance: float = 1e-8
    exact: bool = True
    out: str | None = None
    format: str = "json"

    def __post_init__(self):
        if not isinstance(self.u, int) or self.u < 3:
            raise ValueError(f"u must be an integer >= 3, got {self.u!r}")
        if self.order < 1:
            raise ValueError("order must be at least 1")
        if not 0 < self.tolerance < 1:
            raise ValueError("tolerance must lie in (0, 1)")
        if self.format not in FORMATS:
            raise ValueError(f"format must be one of {FORMATS}")

    def require_odd(self) -> None:
        if self.u % 2 == 0:
            raise click.BadParameter(f"this command needs odd u, got {self.u}", param_hint="--u")


_CONFIG_KEYS = {"u": int, "order": int, "tol": float, "tolerance": float, "format": str, "out": str,
                "exact": lambda s: s.strip().lower() in ("1", "true", "yes", "exact")}


def read_config(path: str) -> dict:
    """Parse a key = value file; '#' starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            key = key.strip().lower()
            if not sep or key not in _CONFIG_KEYS:
                raise click.BadParameter(f"{path}:{lineno}: cannot read {raw.strip()!r}", param_hint="--config")
            out["tolerance" if key == "tol" else key] = _CONFIG_KEYS[key](val.strip())
    return out


def _build_config(config, u, order, tol, fmt, out, exact) -> RunConfig:
    values = read_config(config) if config else {}
    for key, val in (("u", u), ("order", order), ("tolerance", tol), ("format", fmt), ("out", out),
                     ("exact", exact)):
        if val is not None:
            values[key] = val
    try:
        return RunConfig(**values)
    except (ValueError, TypeError) as err:
        raise click.BadParameter(str(err))


def common_options(fn: Callable) -> Callable:
    options = [
        click.option("--config", type=click.Path(exists=True, dir_okay=False), help="key = value defaults."),
        click.option("--u", "u", type=int, default=None, help="u (k = -3 + u/2)."),
        click.option("--order", type=int, default=None, help="q-series truncation order."),
        click.option("--tol", type=float, default=None, help="numeric tolerance."),
        click.option("--format", "fmt", type=click.Choice(FORMATS), default=None),
        click.option("--out", type=click.Path(dir_okay=False), default=None, help="output file."),
        click.option("--exact/--numeric", "exact", default=None, help="exact values in JSON output."),
    ]
    for opt in reversed(options):
        fn = opt(fn)
    return fn


# ---------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------

def cyc_to_json(x: CycNum) -> dict:
    return {"cyclotomic_order": x.order, "coeffs": [str(c) for c in x.coeffs[: x.degree]]}


def cyc_from_json(data: dict) -> CycNum:
    return CycNum(int(data["cyclotomic_order"]), [Fraction(c) for c in data["coeffs"]])


def _complex_pair(z: complex) -> list[float]:
    return [round(z.real, 15) + 0.0, round(z.imag, 15) + 0.0]


def _label_text(x) -> str:
    return x.tag() if isinstance(x, AdmissibleWeight) else x.text()


def _parse_matrix_label(text: str, u: int):
    if ":" in text:
        fam, lam = text.split(":")
        return AdmissibleWeight(u, fam, AffineWeight.parse(lam))
    return AffineWeight.parse(text)


def smatrix_to_json(s: SMatrix, u: int, algebra: str, exact: bool = True) -> dict:
    doc = {"schema": SCHEMA, "kind": "s-matrix", "algebra": algebra, "u": u,
           "labels": [_label_text(x) for x in s.rows],
           "complex": [[_complex_pair(z) for z in row] for row in s.to_complex()]}
    if exact:
        doc["entries"] = [[cyc_to_json(x) for x in row] for row in s.entries]
    return doc


def smatrix_from_json(doc: dict) -> SMatrix:
    u = int(doc["u"])
    labels = [_parse_matrix_label(t, u) for t in doc["labels"]]
    entries = [[cyc_from_json(x) for x in row] for row in doc["entries"]]
    return SMatrix(labels, labels, entries)


def _complex_text(z: complex) -> str:
    return repr(complex(round(z.real, 15) + 0.0, round(z.imag, 15) + 0.0))


def _emit(cfg: RunConfig, doc: dict, rows: list[list] | None) -> None:
    if cfg.format == "csv":
        if rows is None:
            raise click.UsageError("this output has no CSV form; use --format json")
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(rows)
        text = buf.getvalue()
    else:
        text = json.dumps(doc, indent=1, sort_keys=True) + "\n"
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


def _fail(message: str) -> None:
    click.echo(f"invariant violation: {message}", err=True)
    sys.exit(1)


# ---------------------------------------------------------------------------
# verification suites
# ---------------------------------------------------------------------------

def _cyc_phase(u: int, r: Fraction) -> CycNum:
    n = 12 * u
    return CycNum.root_of_unity(n, int(r * n))


def _modular_checks(u: int, cfg: RunConfig) -> list[tuple[str, bool, str]]:
    out = []
    mats = [("wzw", wzw_smatrix(u))]
    if u % 2:
        mats.append(("bp", bp_smatrix(u)))
    for name, s in mats:
        out.append((f"{name} S unitary", s.is_unitary(), f"{s.size}x{s.size}"))
        out.append((f"{name} S symmetric", s.is_symmetric(), ""))
    if u % 2 == 0:
        return out
    labels = enumerate_P(u)
    ok = True
    for a in labels:
        for b in labels:
            s = bp_entry(u, a, b)
            for n in range(-2, 3):
                ok &= bp_entry(u, a.nabla(n), b) == s * _cyc_phase(u, -n * (bp_charge(b) - Fraction(u, 3)))
            ok &= bp_entry(u, dynkin(a), dynkin(b)) == s * _cyc_phase(u, bp_charge(a) + bp_charge(b))
    out.append(("BP S nabla and conjugation identities", ok, f"{len(labels) ** 2} pairs"))
    ok = True
    for nu in admissible_weights(u):
        t = sl3_tmatrix(u, nu)
        w = nu.weight
        fin = w.finite()
        s0 = AffineWeight.from_finite(fin + ALPHA3 * (w.l0 + 1), level(u))
        ok &= sl3_tmatrix(u, s0, strict=False) == t * Phase(Fraction(u, 2) - bilinear(fin, ALPHA3))
        ok &= sl3_tmatrix(u, w.nabla(1)) == t * Phase(Fraction(u, 6) - bilinear(fin, OMEGA1))
    out.append(("admissible T identities", ok, f"{len(admissible_weights(u))} weights"))
    adm = sl3_adm_smatrix_full(u)
    out.append(("admissible S unitary", adm.is_unitary(), f"{adm.size}x{adm.size}"))
    return out


def _galois_checks(u: int, cfg: RunConfig) -> list[tuple[str, bool, str]]:
    cfg.require_odd()
    n = len(enumerate_P(u))
    return [("Galois relation S^BP vs sigma(S^WZW)", check_galois_relation(u), f"{n * n} pairs"),
            ("Galois permutation with signs", check_galois_permutation(u), f"{n} labels")]


def _fusion_checks(u: int, cfg: RunConfig) -> list[tuple[str, bool, str]]:
    kw = fusion_table(u, "kac-walton")
    tables = {"verlinde": fusion_table(u, "verlinde"), "kac-walton": kw}
    if u % 2:
        tables["bp"] = fusion_table(u, "bp")
    n = len(kw.labels)
    out = [(f"{m} = kac-walton", t == kw, f"{n ** 3} triples") for m, t in tables.items() if m != "kac-walton"]
    bad = kw.violations()
    out.append(("nonnegative, symmetric, vacuum unit", not bad, "; ".join(bad[:3])))
    out.append(("associative", kw.is_associative(), ""))
    return out


def _character_checks(u: int, cfg: RunConfig) -> list[tuple[str, bool, str]]:
    cfg.require_odd()
    order = min(cfg.order, 15)
    out = []
    for lam in enumerate_P(u):
        ch = chars.qhr_character(u, lam, order)
        w = bp_weight(u, lam)
        coeffs = [c for p in ch.terms.values() for c in p.values()]
        top = ch.grade(0)
        expected_top = {(Fraction(w.j - r),): 1 for r in range(int(lam.l2) + 1)}
        ok = (all(isinstance(c, int) and c > 0 for c in coeffs) and top == expected_top
              and ch.offset == w.Delta - c_bp(u) / 24)
        t_err = chars.numeric_t_check(u, lam, 0.13 + 0.02j, 0.1 + 0.9j, order)
        out.append((f"BP character {lam.text()}", ok and t_err < 1e-10, f"order {order}, T error {t_err:.1e}"))
    if u == 3:
        out.append(("trivial model character is 1", chars.qhr_character(3, enumerate_P(3)[0], order)
                    == chars.QSeries.one(("z",), order), ""))
    return out


def _s_transform_checks(u: int, cfg: RunConfig, tau: complex = 1j, zeta: complex = 0.1) -> list:
    cfg.require_odd()
    try:
        err = chars.numeric_s_check(u, zeta, tau, cfg.order, cfg.tolerance)
    except chars.TailError as exc:
        hint = f"; order {exc.required_order} should suffice" if exc.required_order else ""
        return [("S-transform ratio test", False, f"{exc}{hint}")]
    return [("S-transform ratio test", err < cfg.tolerance, f"max relative error {err:.3e}")]


def run_suite(suite: str, cfg: RunConfig, tau: complex = 1j, zeta: complex = 0.1) -> list[tuple[str, bool, str]]:
    u = cfg.u
    parts = {
        "modular": lambda: _modular_checks(u, cfg),
        "galois": lambda: _galois_checks(u, cfg),
        "fusion": lambda: _fusion_checks(u, cfg),
        "characters": lambda: _character_checks(u, cfg),
        "s-transform": lambda: _s_transform_checks(u, cfg, tau, zeta),
    }
    if suite == "all":
        names = ["modular", "galois", "fusion", "characters", "s-transform"] if u % 2 else ["modular", "fusion"]
    else:
        names = [suite]
    results = []
    for name in names:
        results += [(f"{name}: {n}", bool(p), d) for n, p, d in parts[name]()]
    return results


def _parse_complex(text: str) -> complex:
    try:
        return complex(text.replace(" ", "").replace("i", "j"))
    except ValueError:
        raise click.BadParameter(f"cannot read {text!r} as a complex number")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

@click.group()
def main() -> None:
    """Modular data, fusion and characters of sl(3) and Bershadsky-Polyakov minimal models."""


@main.command("s-matrix")
@click.option("--algebra", type=click.Choice(ALGEBRAS), default="bp", show_default=True)
@common_options
def cmd_smatrix(algebra, config, u, order, tol, fmt, out, exact):
    """Exact S-matrix, with unitarity and symmetry self-checks."""
    cfg = _build_config(config, u, order, tol, fmt, out, exact)
    if algebra != "wzw":
        cfg.require_odd()
    s = {"wzw": wzw_smatrix, "bp": bp_smatrix, "sl3-adm": sl3_adm_smatrix_full}[algebra](cfg.u)
    unitary, symmetric = s.is_unitary(), s.is_symmetric()
    doc = smatrix_to_json(s, cfg.u, algebra, cfg.exact)
    doc["checks"] = {"unitary": unitary, "symmetric": symmetric}
    rows = [[_label_text(x) for x in s.rows]] + [[_complex_text(z) for z in row] for row in s.to_complex()]
    _emit(cfg, doc, rows)
    if not (unitary and symmetric):
        _fail("S-matrix self-check failed")


@main.command("t-matrix")
@click.option("--algebra", type=click.Choice(("bp", "sl3-adm")), default="bp", show_default=True)
@common_options
def cmd_tmatrix(algebra, config, u, order, tol, fmt, out, exact):
    """Diagonal T-matrix as phases exp(2 pi i r)."""
    cfg = _build_config(config, u, order, tol, fmt, out, exact)
    cfg.require_odd()
    if algebra == "bp":
        pairs = [(x.text(), bp_tmatrix(cfg.u, x)) for x in enumerate_P(cfg.u)]
    else:
        pairs = [(x.tag(), sl3_tmatrix(cfg.u, x)) for x in admissible_weights(cfg.u)]
    doc = {"schema": SCHEMA, "kind": "t-matrix", "algebra": algebra, "u": cfg.u,
           "labels": [a for a, _ in pairs], "complex": [_complex_pair(p.to_complex()) for _, p in pairs]}
    if cfg.exact:
        doc["exact"] = [str(p.value) for _, p in pairs]
    _emit(cfg, doc, [[a for a, _ in pairs], [_complex_text(p.to_complex()) for _, p in pairs]])


@main.command("fusion")
@click.option("--method", type=click.Choice(FUSION_METHODS), default="verlinde", show_default=True)
@click.option("--compare", is_flag=True, help="check every method against Kac-Walton.")
@common_options
def cmd_fusion(method, compare, config, u, order, tol, fmt, out, exact):
    """Fusion table over P^{u-3}."""
    cfg = _build_config(config, u, order, tol, fmt, out, exact)
    if method == "bp":
        cfg.require_odd()
    table = fusion_table(cfg.u, method)
    doc = {"schema": SCHEMA, "kind": "fusion", "method": method, "u": cfg.u,
           "table": json.loads(table.to_json())}
    problems = table.violations()
    if compare:
        kw = fusion_table(cfg.u, "kac-walton")
        others = [m for m in FUSION_METHODS if m != "kac-walton" and (m != "bp" or cfg.u % 2)]
        doc["compare"] = {m: fusion_table(cfg.u, m) == kw for m in others}
        problems += [f"{m} differs from kac-walton" for m, same in doc["compare"].items() if not same]
    rows = [["lambda", "mu", "nu", "N"]] + [[a.text(), b.text(), c.text(), _complex_text(complex(n))]
                                            for (a, b, c), n in sorted(table.coefficients.items(),
                                                                       key=lambda kv: [x.key() for x in kv[0]])
                                            if n]
    _emit(cfg, doc, rows)
    if problems:
        _fail("; ".join(problems[:5]))


@main.command("groth-fusion")
@click.option("--left", required=True, help="module label, e.g. 'Lw0:2,0,0' or 'R:1,0,1:gamma=1/5,2/5'.")
@click.option("--right", required=True)
@click.option("--method", type=click.Choice(("auto", "closed", "derived")), default="auto", show_default=True)
@common_options
def cmd_groth(left, right, method, config, u, order, tol, fmt, out, exact):
    """Grothendieck product of two module classes."""
    cfg = _build_config(config, u, order, tol, fmt, out, exact)
    cfg.require_odd()
    try:
        a, b = parse_label(left, cfg.u), parse_label(right, cfg.u)
    except ValueError as err:
        raise click.BadParameter(str(err))
    try:
        result = groth_fuse(cfg.u, a, b, method)
    except UnsupportedFusion as err:
        raise click.UsageError(f"unsupported product: {err}")
    except (InvariantViolation, TelescopingError, ReductionError) as err:
        _fail(str(err))
    except ValueError as err:
        raise click.BadParameter(str(err))
    doc = {"schema": SCHEMA, "kind": "groth-fusion", "u": cfg.u, "left": a.text(), "right": b.text(),
           "result": result.to_json()}
    rows = [["label", "coeff"]] + [[d["label"], _complex_text(complex(d["coeff"]))] for d in result.to_json()]
    _emit(cfg, doc, rows)


@main.command("character")
@click.option("--module", "module", type=click.Choice(("bp", "sl3")), default="bp", show_default=True)
@click.option("--lambda", "lam", required=True, help="Dynkin labels l0,l1,l2 in P^{u-3}.")
@click.option("--family", type=click.Choice(("0", "1", "2", "w1")), default="0",
              help="admissible family for --module sl3.")
@click.option("--depth", type=int, default=None, help="root-height depth for --module sl3.")
@common_options
def cmd_character(module, lam, family, depth, config, u, order, tol, fmt, out, exact):
    """q-series of an irreducible character."""
    cfg = _build_config(config, u, order, tol, fmt, out, exact)
    cfg.require_odd()
    try:
        weight = AffineWeight.parse(lam)
        if module == "bp":
            series = chars.qhr_character(cfg.u, weight, cfg.order)
        else:
            series = chars.sl3_adm_character(cfg.u, admissible_from_family(cfg.u, family, weight),
                                             cfg.order, depth=depth)
    except ValueError as err:
        raise click.BadParameter(str(err), param_hint="--lambda")
    except (chars.CharacterError, chars.OrbitError) as err:
        _fail(str(err))
    doc = {"schema": SCHEMA, "kind": "character", "module": module, "u": cfg.u, "lambda": weight.text()}
    doc.update(series.to_json())
    rows = [["step", "exponents", "coeff"]] + [[n, " ".join(str(x) for x in e), _complex_text(complex(c))]
                                               for n, e, c in series.items()]
    _emit(cfg, doc, rows)


@main.command("verify")
@click.argument("suite_arg", required=False, type=click.Choice(SUITES), metavar="[SUITE]")
@click.option("--suite", type=click.Choice(SUITES), default=None)
@click.option("--tau", default="0+1i", show_default=True, help="tau for the S-transform check.")
@click.option("--zeta", default="0.1", show_default=True, help="zeta for the S-transform check.")
@common_options
def cmd_verify(suite_arg, suite, tau, zeta, config, u, order, tol, fmt, out, exact):
    """Run verification suites; exit 0 iff every check passes."""
    cfg = _build_config(config, u, order, tol, fmt, out, exact)
    chosen = suite or suite_arg or "all"
    tau_c, zeta_c = _parse_complex(tau), _parse_complex(zeta)
    if tau_c.imag <= 0:
        raise click.BadParameter("tau must lie in the upper half plane", param_hint="--tau")
    results = run_suite(chosen, cfg, tau_c, zeta_c)
    passed = all(p for _, p, _ in results)
    doc = {"schema": SCHEMA, "kind": "verify", "suite": chosen, "u": cfg.u, "passed": passed,
           "checks": [{"name": n, "passed": p, "detail": d} for n, p, d in results]}
    _emit(cfg, doc, [["check", "passed", "detail"]] + [[n, int(p), d] for n, p, d in results])
    if not passed:
        _fail(", ".join(n for n, p, _ in results if not p))


@main.command("admissible")
@common_options
def cmd_admissible(config, u, order, tol, fmt, out, exact):
    """Dump P^{u-3} and the admissible weights."""
    cfg = _build_config(config, u, order, tol, fmt, out, exact)
    cfg.require_odd()
    adm = admissible_weights(cfg.u)
    doc = {"schema": SCHEMA, "kind": "admissible", "u": cfg.u,
           "P": [x.text() for x in enumerate_P(cfg.u)],
           "admissible": [{"family": a.family, "lambda": a.lam.text(), "weight": a.weight.text()} for a in adm]}
    rows = [["family", "lambda", "weight"]] + [[a.family, a.lam.text(), a.weight.text()] for a in adm]
    _emit(cfg, doc, rows)


if __name__ == "__main__":
    main()
