import math

import pytest

from geometry import Action, Point2D, Pose, angle_diff, normalize_heading


@pytest.mark.parametrize(
    "raw, expected",
    [(0.0, 0.0), (360.0, 0.0), (-15.0, 345.0), (735.0, 15.0), (-1e-17, 0.0)],
)
def test_normalize_heading(raw, expected):
    assert normalize_heading(raw) == pytest.approx(expected)
    assert 0.0 <= normalize_heading(raw) < 360.0


def test_angle_diff_takes_the_short_way():
    assert angle_diff(10.0, 350.0) == pytest.approx(20.0)
    assert angle_diff(350.0, 10.0) == pytest.approx(-20.0)
    assert angle_diff(180.0, 0.0) == pytest.approx(180.0)


def test_pose_heading_is_normalized():
    assert Pose(1.0, 2.0, -90.0).heading == 270.0


def test_offset_and_bearing():
    pose = Pose(1.0, 1.0, 90.0)
    p = pose.offset(0.0, 2.0)
    assert p.x == pytest.approx(1.0)
    assert p.y == pytest.approx(3.0)
    assert Point2D(0.0, 0.0).bearing_to(Point2D(0.0, -1.0)) == pytest.approx(270.0)
    assert Point2D(0.0, 0.0).distance_to(Point2D(3.0, 4.0)) == pytest.approx(5.0)


def test_action_mnemonics():
    assert [a.mnemonic for a in Action] == ["FWD", "TL", "TR", "STOP"]
    assert Action.from_mnemonic("TL") is Action.TURN_LEFT
    with pytest.raises(ValueError):
        Action.from_mnemonic("JUMP")


def test_pose_to_dict():
    assert Pose(1.5, 2.5, 45.0).to_dict() == {"x": 1.5, "y": 2.5, "heading": 45.0}
    assert math.isclose(Pose(0, 0, 30).offset(-30, 1).y, 0.0, abs_tol=1e-12)
