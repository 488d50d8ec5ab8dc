import numpy as np
import pytest

from guidedpolicy.dialenv import (DialogueEnv, catalog_from_episodes, desk_schemas,
                                  generate_expert_episodes, reindex)
from guidedpolicy.dialenv.corpus import TransitionCorpus


@pytest.fixture(scope="session")
def schemas():
    return desk_schemas()


@pytest.fixture(scope="session")
def small_world(schemas):
    """A 400-episode expert corpus with its 60-action catalog."""
    env = DialogueEnv(schemas)
    rng = np.random.default_rng(11)
    episodes = generate_expert_episodes(env, 400, rng, noise=0.1)
    catalog = catalog_from_episodes(episodes, 60)
    reindex(episodes, catalog)
    corpus = TransitionCorpus.from_episodes(episodes, catalog)
    return env, episodes, catalog, corpus


_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line for an acceptance criterion."""
    def record(n, ok: bool, detail: str):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _VERDICTS.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
