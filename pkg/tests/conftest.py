import pytest
from hypothesis import settings

from bcastlab.core import BASELINE, Event, Schedule

# wall-clock deadlines flake on a loaded single-core box; correctness is what we test
settings.register_profile("bcastlab", deadline=None)
settings.load_profile("bcastlab")


@pytest.fixture
def baseline():
    return BASELINE


def relabel(s: Schedule, shift: int) -> Schedule:
    """Shift every rank id by ``shift`` (mod n), peers included."""
    n = s.n_ranks
    ops = [()] * n
    for r, evs in enumerate(s.per_rank_ops):
        ops[(r + shift) % n] = tuple(
            Event(e.kind, (e.peer + shift) % n, e.chunks, e.round) for e in evs
        )
    return Schedule(n, (s.root + shift) % n, s.message_bytes, s.chunks, tuple(ops),
                    s.algorithm, s.staging_bytes, s.root_self_transfer, s.redundant_recvs)


def final_ownership(s: Schedule) -> list[set]:
    """Brute-force: every Recv grants its chunks (ignores ordering entirely)."""
    owned = [set() for _ in range(s.n_ranks)]
    owned[s.root] = set(range(len(s.chunks)))
    for r, evs in enumerate(s.per_rank_ops):
        for e in evs:
            if not e.is_send:
                owned[r].update(e.chunks)
    return owned


# acceptance criterion id -> (title, outcome, seconds)
_ACCEPTANCE: dict[int, tuple[str, str, float]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or report.when != "call":
        return
    cid, title = mark.args
    verdict = "PASS" if report.passed else "FAIL"
    # a criterion split over several tests fails if any part fails
    prev = _ACCEPTANCE.get(cid)
    if prev is not None and prev[1] == "FAIL":
        verdict = "FAIL"
    spent = report.duration + (prev[2] if prev else 0.0)
    _ACCEPTANCE[cid] = (title, verdict, spent)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_ACCEPTANCE):
        title, verdict, spent = _ACCEPTANCE[cid]
        terminalreporter.write_line(f"criterion {cid}: {verdict}  {title}  ({spent:.2f} s)")
