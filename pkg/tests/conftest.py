import numpy as np
import pytest

from gvd.world import ClassSpec, ModeSpec, WorldSpec, build_world


def isotropic_world(frames=2, dim=2, n_classes=2):
    """Every class is the single mode N(0, I): init N(0, I), A = 0, b = 0, q = 1."""
    mode = ModeSpec(1.0, [0.0] * dim, 1.0, np.zeros((dim, dim)).tolist(), [0.0] * dim, 1.0)
    return build_world(WorldSpec([ClassSpec([mode]) for _ in range(n_classes)], frames, dim))


def random_world(seed, frames=2, dim=4, n_classes=2, n_modes=2, noise=1.0):
    """Full-covariance mixtures with random contracting dynamics."""
    rng = np.random.default_rng(seed)
    classes = []
    for _ in range(n_classes):
        w = rng.dirichlet(np.ones(n_modes))
        A = rng.standard_normal((dim, dim))
        A *= 0.8 / max(abs(np.linalg.eigvals(A)))
        modes = [
            ModeSpec(
                float(wi),
                (2.0 * rng.standard_normal(dim)).tolist(),
                noise * float(rng.uniform(0.5, 1.5)),
                A.tolist(),
                rng.standard_normal(dim).tolist(),
                noise * float(rng.uniform(0.3, 1.0)),
            )
            for wi in w / w.sum()
        ]
        classes.append(ClassSpec(modes))
    return WorldSpec(classes, frames, dim, seed)


@pytest.fixture
def small_world():
    return build_world(random_world(3))


ACCEPTANCE: list[str] = []


@pytest.fixture
def criterion(capsys):
    """``criterion(n, ok, detail)`` prints one PASS/FAIL line and fails the test when ``ok`` is false."""

    def report(n, ok, detail):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
