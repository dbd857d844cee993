#!/usr/bin/env python3
"""End-to-end exercise of the micrlb_py extension module.

Builds nothing itself: it expects `cargo build -p micrlb-py` (debug or
release) to have produced the cdylib already, copies it next to a
temporary directory under the importable name, and then drives the whole
pipeline: channel constants, deployment generation, bound evaluation,
measurement sampling, and the estimator. Exits nonzero on the first
failed assertion.
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path


def locate_extension():
    root = Path(__file__).resolve().parent.parent
    candidates = [
        root / "target" / "release" / "libmicrlb_py.so",
        root / "target" / "debug" / "libmicrlb_py.so",
        root / "target" / "release" / "libmicrlb_py.dylib",
        root / "target" / "debug" / "libmicrlb_py.dylib",
    ]
    for c in candidates:
        if c.exists():
            return c
    sys.exit(
        "libmicrlb_py not found; run `cargo build -p micrlb-py` first "
        f"(searched {', '.join(str(c) for c in candidates)})"
    )


def import_extension():
    lib = locate_extension()
    staging = Path(tempfile.mkdtemp(prefix="micrlb_py_"))
    shutil.copy2(lib, staging / "micrlb_py.so")
    sys.path.insert(0, str(staging))
    import micrlb_py

    return micrlb_py


def close(a, b, rel=1e-12, context=""):
    scale = max(abs(a), abs(b), 1e-300)
    if abs(a - b) / scale > rel:
        sys.exit(f"mismatch {context}: {a!r} vs {b!r} (rel tol {rel})")


def main():
    m = import_extension()

    # Channel golden value and the d^-n falloff.
    tx = m.CoilSpec(turns=20, radius=0.02)
    rx = m.CoilSpec(turns=20, radius=0.02)
    params = m.ChannelParams()
    k = m.coupling_constant(tx, rx, params)
    close(k, 4.4215827716880324e-8, 1e-12, "coupling constant")
    close(m.received_power(k, 5.0, 6), k / 5.0**6, 1e-12, "received power n=6")
    close(
        m.received_power(k, 10.0, 6) / m.received_power(k, 5.0, 6),
        2.0**-6,
        1e-12,
        "sixth-power falloff",
    )
    close(
        m.received_power(k, 10.0, 3) / m.received_power(k, 5.0, 3),
        2.0**-3,
        1e-12,
        "third-power falloff",
    )

    # Coupling is linear in receiver turns, cubic in each radius, and
    # independent of transmitter turns.
    k2 = m.coupling_constant(tx, m.CoilSpec(turns=40, radius=0.02), params)
    close(k2 / k, 2.0, 1e-12, "receiver turns scaling")
    k3 = m.coupling_constant(m.CoilSpec(turns=20, radius=0.04), rx, params)
    close(k3 / k, 8.0, 1e-12, "radius-cubed scaling")
    k4 = m.coupling_constant(m.CoilSpec(turns=40, radius=0.02), rx, params)
    close(k4, k, 1e-12, "transmitter turns do not enter")

    # Invalid inputs surface as ValueError, not panics.
    for bad in (lambda: m.CoilSpec(turns=0),
                lambda: m.CoilSpec(radius=5.0),
                lambda: m.NoiseSpec.ranging(-1.0),
                lambda: m.received_power(k, 5.0, 4)):
        try:
            bad()
        except ValueError:
            pass
        else:
            sys.exit(f"expected ValueError from {bad}")

    # A helix scenario gives a finite bound; the default well line does not.
    helix = m.ScenarioConfig(thing_count=2, anchor_count=6, placement="helix")
    dep = m.generate(helix, seed=7)
    assert len(dep.anchors) == 6 and len(dep.things) == 2, "deployment shape"
    graph = m.build_graph(dep, helix)
    assert graph.edge_count == 12, f"expected 12 edges, got {graph.edge_count}"
    positions = dep.positions()
    report = m.crlb(graph, positions)
    assert not report.singular, "helix scene reported singular"
    assert report.aggregate > 0 and math.isfinite(report.aggregate), "aggregate bound"
    assert len(report.per_node) == 2, "per-node bound count"

    line = m.ScenarioConfig(thing_count=2, anchor_count=3, placement="well_line")
    dep_line = m.generate(line, seed=7)
    graph_line = m.build_graph(dep_line, line)
    report_line = m.crlb(graph_line, dep_line.positions())
    assert report_line.singular, "collinear anchors should be singular"
    assert math.isinf(report_line.aggregate), "singular aggregate should be inf"

    # The statistical oracle agrees with the closed form.
    oracle = m.crlb(graph, positions, mode="oracle-mc", samples=40000, seed=3)
    close(oracle.aggregate, report.aggregate, 0.05, "oracle vs standard aggregate")

    # The transcribed variant exposes its scalar formula.
    paper = m.crlb(graph, positions, mode="paper")
    assert paper.paper_formula is not None, "paper mode should carry its formula"

    # Scene text round-trips to its 9 significant digit precision.
    text = m.write_scene(dep, graph)
    dep2, graph2 = m.parse_scene(text)
    for a, b in zip(dep2.positions(), dep.positions()):
        for x, y in zip(a, b):
            close(x, y, 1e-8, "scene round trip position")
    assert graph2.edge_count == graph.edge_count, "scene round trip edges"
    for (a2, b2, kind2, k2_, s2), (a1, b1, kind1, k1_, s1) in zip(
        graph2.edges(), graph.edges()
    ):
        assert (a2, b2, kind2) == (a1, b1, kind1), "scene round trip edge identity"
        close(k2_, k1_, 1e-8, "scene round trip edge k")
        close(s2, s1, 1e-8, "scene round trip edge sigma")
    text2 = m.write_scene(dep2, graph2)
    assert text2 == text, "second round trip should be exact"

    # Measurement sampling is seed-deterministic.
    z1 = m.sample_measurements(graph, positions, seed=11)
    z2 = m.sample_measurements(graph, positions, seed=11)
    z3 = m.sample_measurements(graph, positions, seed=12)
    assert z1 == z2, "same seed must reproduce measurements"
    assert z1 != z3, "different seeds should differ"
    assert len(z1) == graph.edge_count, "one measurement per edge"

    # The estimator recovers the truth at small noise.
    quiet = m.LinkBudget(noise=m.NoiseSpec.ranging(0.005))
    graph_q = m.build_graph(dep, helix, budget=quiet)
    z = m.sample_measurements(graph_q, positions, seed=21)
    lo, hi = helix.box_bounds()
    est = m.multi_start(graph_q, dep.anchors, z, lo, hi, starts=8, seed=5)
    assert est.converged, "estimator did not converge"
    worst = max(
        math.dist(a, b) for a, b in zip(est.things, dep.things)
    )
    assert worst < 0.2, f"estimate off by {worst:.3f} m at sigma 0.005"

    refined = m.mle_localize(graph_q, dep.anchors, z, est.things)
    assert refined.objective <= est.objective * (1 + 1e-9), "refinement regressed"

    print("smoke test passed")


if __name__ == "__main__":
    main()
