"""Shared fixtures: the small environments and their exact solutions."""

import pytest

from hiddengoal import make_env, plan_teacher, solve_belief_mdp


@pytest.fixture(scope="session")
def line3():
    return make_env("line-search", 3)


@pytest.fixture(scope="session")
def line2():
    return make_env("line-search", 2)


@pytest.fixture(scope="session")
def push3():
    return make_env("push-line", 3)


@pytest.fixture(scope="session")
def room4():
    return make_env("room-graph", 4)


@pytest.fixture(scope="session")
def teacher3(line3):
    return plan_teacher(line3)


@pytest.fixture(scope="session")
def oracle3(line3):
    return solve_belief_mdp(line3)
