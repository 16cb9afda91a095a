import pytest

from demoaug.render import default_settings
from demoaug.world import KinematicWorld, WorldConfig, task_spec


@pytest.fixture(scope="session")
def world():
    return KinematicWorld(WorldConfig(image_size=32))


@pytest.fixture(scope="session")
def settings():
    # small frames keep the suites quick; the learner only needs /8 divisible
    return default_settings(32)


@pytest.fixture(scope="session")
def tiny_settings():
    return default_settings(16)


@pytest.fixture(scope="session")
def expert_demo(world, settings):
    """One scripted pick-and-place demo, shared by read-only tests."""
    task = task_spec("pick_place", 1)
    state = world.reset(task, seed=11)
    return world.scripted_expert(task, state, seed=11, settings=settings)
