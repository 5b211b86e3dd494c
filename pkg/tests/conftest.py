import pytest

from gazemarkers.ingest import DisplayRect, Eye, ViewingGeometry


@pytest.fixture
def geometry():
    # 0.5 mm pixel pitch on both axes, eye 600 mm from the screen center.
    return ViewingGeometry(
        screen_width_px=1000,
        screen_height_px=1000,
        screen_width_mm=500.0,
        screen_height_mm=500.0,
        viewing_distance_mm=600.0,
        sampling_rate_hz=500.0,
    )


@pytest.fixture
def sim_geometry():
    return ViewingGeometry(1920, 1080, 528.0, 297.0, 600.0, 500.0)


@pytest.fixture
def full_rect():
    return DisplayRect(0.0, 0.0, 1000.0, 1000.0)


@pytest.fixture
def eyes():
    return Eye
