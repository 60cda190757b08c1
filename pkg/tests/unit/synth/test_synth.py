"""Unit test the synthetic scene generator."""

import re
from pathlib import Path

import numpy as np
import pytest
from fbc.model import US_PER_S, Event, Polarity
from fbc.synth import (
    Oscillation,
    PiecewiseVelocity,
    SceneObject,
    SceneSpec,
    SceneSpecError,
    format_scene,
    generate,
    generate_random_events,
    oracle_flows,
    parse_scene,
    preset,
    random_flow_batch,
    read_scene,
    scene_names,
    validate_scene,
)

SCENES = Path(__file__).parents[3] / "testdata" / "scenes"


def _bar(motion, **kwargs) -> SceneSpec:  # type: ignore[no-untyped-def]
    obj = SceneObject("bar", 10.0, 10.0, 10.3, 20.5, motion)
    return SceneSpec(64, 48, (obj,), US_PER_S, **kwargs)


# -----------------------------
# motion
# -----------------------------


def test_piecewise_motion() -> None:
    """Segments integrate; the last velocity holds past the end."""
    m = PiecewiseVelocity(((1000, 100.0, 0.0), (1000, -50.0, 10.0)))
    dx, dy = m.displacement(np.array([0, 500, 1000, 2000, 3000]))
    assert dx.tolist() == pytest.approx([0.0, 0.05, 0.1, 0.05, 0.0])
    assert dy.tolist() == pytest.approx([0.0, 0.0, 0.0, 0.01, 0.02])
    vx, _ = m.velocity(np.array([0, 999, 1000, 5000]))
    assert vx.tolist() == [100.0, 100.0, -50.0, -50.0]


def test_oscillation() -> None:
    """Starts at the origin and swings with the given amplitude."""
    m = Oscillation(0.0, 40.0, 0.5)
    dx, dy = m.displacement(np.array([0, US_PER_S, 2 * US_PER_S]))
    assert dx.tolist() == [0.0, 0.0, 0.0]
    assert dy.tolist() == pytest.approx([0.0, 0.0, 0.0], abs=1e-9)
    _, vy = m.velocity(np.array([0]))
    assert vy[0] == pytest.approx(40.0 * np.pi)


# -----------------------------
# generation
# -----------------------------


def test_edge_crossings() -> None:
    """Every edge fires once per pixel center it passes, on each covered row."""
    stream, truth = generate(_bar(PiecewiseVelocity.constant(20.0, 0.0)))
    assert len(stream) == 400
    assert stream.is_sorted()
    assert set(stream.y.tolist()) == set(range(16, 26))

    on = stream.p == int(Polarity.ON)
    assert int(on.sum()) == 200
    assert set(stream.x[on].tolist()) == set(range(16, 36))  # leading edge
    assert set(stream.x[~on].tolist()) == set(range(6, 26))  # trailing edge
    assert int(stream.t[0]) == 35_000

    assert all(truth.velocity_of(e) == (20.0, 0.0) for e in stream)
    assert len(truth) == 400


def test_dark_object_flips_polarity() -> None:
    """The leading edge of a dark object is OFF."""
    obj = SceneObject("bar", 10.0, 10.0, 10.3, 20.5, PiecewiseVelocity.constant(20.0, 0.0), bright=False)
    stream, _ = generate(SceneSpec(64, 48, (obj,), US_PER_S))
    lead = stream.x >= 26
    assert set(stream.p[lead].tolist()) == {int(Polarity.OFF)}


def test_static_scene_is_silent() -> None:
    """Nothing moves, nothing fires."""
    stream, truth = generate(_bar(PiecewiseVelocity.constant(0.0, 0.0)))
    assert len(stream) == 0
    assert len(truth) == 0


def test_crossing_times_follow_speed() -> None:
    """Consecutive columns of the leading edge are 1/v apart."""
    stream, _ = generate(_bar(PiecewiseVelocity.constant(100.0, 0.0)))
    row = (stream.y == 20) & (stream.p == int(Polarity.ON))
    gaps = np.diff(stream.t[row])
    assert np.all(np.abs(gaps - 10_000) <= 1)


def test_noise() -> None:
    """Background activity is seeded and has no ground-truth flow."""
    spec = SceneSpec(64, 48, (), US_PER_S, noise_rate=1000.0, seed=3)
    stream, truth = generate(spec)
    assert 850 < len(stream) < 1150
    assert stream.is_sorted()
    assert all(truth.is_noise(e) for e in stream)
    assert all(f.valid is False for f in oracle_flows(stream, truth))
    assert generate(spec)[0] == stream
    assert generate(SceneSpec(64, 48, (), US_PER_S, noise_rate=1000.0, seed=4))[0] != stream


def test_generation_is_deterministic() -> None:
    """The same spec gives the same stream."""
    spec = preset("bar-square", duration_us=200_000)
    a, truth_a = generate(spec)
    b, truth_b = generate(spec)
    assert a == b
    assert len(a) > 0
    assert len(truth_a) == len(truth_b)


def test_oracle_flows() -> None:
    """Ground-truth flow of scene events, below-v_min marked invalid."""
    stream, truth = generate(_bar(PiecewiseVelocity.constant(20.0, 0.0)))
    flows = oracle_flows(stream, truth)
    assert all(f.valid and (f.vx, f.vy) == (20.0, 0.0) for f in flows)
    assert not any(f.valid for f in oracle_flows(stream, truth, v_min=50.0))


def test_ground_truth_lookup() -> None:
    """Unknown events are neither flow nor noise."""
    stream, truth = generate(_bar(PiecewiseVelocity.constant(20.0, 0.0)))
    assert stream[0] in truth
    stranger = Event(0, 0, 1, Polarity.ON)
    assert stranger not in truth
    assert truth.velocity_of(stranger) is None
    assert not truth.is_noise(stranger)
    assert "not an event" not in truth


@pytest.mark.parametrize(
    "obj,msg",
    [
        (SceneObject("disc", 1.0, 1.0, 5.0, 5.0, PiecewiseVelocity.constant(1, 0)), "unknown shape"),
        (SceneObject("bar", 0.0, 1.0, 5.0, 5.0, PiecewiseVelocity.constant(1, 0)), "zero-size"),
        (SceneObject("square", 2.0, 3.0, 5.0, 5.0, PiecewiseVelocity.constant(1, 0)), "square with sides"),
        (SceneObject("bar", 2.0, 3.0, 5.0, 5.0, PiecewiseVelocity(())), "without segments"),
        (SceneObject("bar", 2.0, 3.0, 5.0, 5.0, PiecewiseVelocity(((0, 1.0, 0.0),))), "positive"),
        (SceneObject("bar", 2.0, 3.0, 5.0, 5.0, PiecewiseVelocity.constant(3000, 0)), "exceeds"),
        (SceneObject("bar", 2.0, 3.0, 5.0, 5.0, Oscillation(1000.0, 0.0, 1.0)), "exceeds"),
    ],
)
def test_degenerate_objects(obj: SceneObject, msg: str) -> None:
    """Scenes that cannot be generated are refused."""
    with pytest.raises(SceneSpecError, match=msg):
        validate_scene(SceneSpec(64, 48, (obj,), US_PER_S))


def test_degenerate_scenes() -> None:
    """Sensor, duration, and noise are checked too."""
    with pytest.raises(SceneSpecError, match="out of range"):
        validate_scene(SceneSpec(0, 48, (), US_PER_S))
    with pytest.raises(SceneSpecError, match="duration"):
        validate_scene(SceneSpec(64, 48, (), 0))
    with pytest.raises(SceneSpecError, match="noise"):
        validate_scene(SceneSpec(64, 48, (), US_PER_S, noise_rate=-1.0))


# -----------------------------
# random flow events
# -----------------------------


def test_random_flow_batch() -> None:
    """Seeded, in range, never slower than v_min."""
    batch = random_flow_batch(5000, (-10.0, 10.0), (32, 16), seed=1, v_min=5.0, t_us=7)
    assert len(batch) == 5000
    assert batch.x.min() >= 0 and batch.x.max() < 32
    assert batch.y.min() >= 0 and batch.y.max() < 16
    assert np.all(np.hypot(batch.vx, batch.vy) >= 5.0)
    assert set(batch.t.tolist()) == {7}
    again = random_flow_batch(5000, (-10.0, 10.0), (32, 16), seed=1, v_min=5.0, t_us=7)
    assert np.array_equal(batch.vx, again.vx)
    with pytest.raises(SceneSpecError, match="n must be >= 0"):
        random_flow_batch(-1)


def test_generate_random_events() -> None:
    """The tuple form matches the batch."""
    events = generate_random_events(10, seed=2)
    batch = random_flow_batch(10, seed=2)
    assert [fe.x for fe in events] == batch.x.tolist()
    assert [fe.vy for fe in events] == batch.vy.tolist()


# -----------------------------
# presets and scene files
# -----------------------------


def test_presets() -> None:
    """Named scenes, with overrides."""
    assert list(scene_names()) == ["bar-square", "constant", "shuttle"]
    assert preset("constant", duration_us=1000, seed=9).duration_us == 1000
    assert preset("constant", seed=9).seed == 9
    with pytest.raises(SceneSpecError, match="Unknown preset: nope"):
        preset("nope")


def test_oscillating_preset_never_goes_quiet() -> None:
    """Every 5 ms slice of the oscillating preset holds source events, reversals included."""
    spec = preset("bar-square")
    stream, truth = generate(spec)
    counts = np.bincount(stream.t // 5_000, minlength=400)[:400]
    assert counts.min() >= 20
    assert any(truth.is_noise(e) for e in stream)
    bar, square = spec.objects
    assert bar.motion != square.motion


@pytest.mark.parametrize("name", ["bar-square", "constant", "shuttle"])
def test_format_then_parse(name: str) -> None:
    """A formatted scene reads back as the same scene."""
    assert parse_scene(format_scene(preset(name))) == preset(name)


@pytest.mark.parametrize("name", ["constant", "shuttle"])
def test_scene_files_match_presets(name: str) -> None:
    """The shipped scene files describe the presets."""
    assert read_scene(SCENES / f"{name}.scene") == preset(name)


def test_noisy_scene_file() -> None:
    """The dark noisy scene parses."""
    spec = read_scene(SCENES / "noisy_dark.scene")
    assert (spec.width, spec.height, spec.noise_rate, spec.seed) == (64, 48, 2000.0, 7)
    assert not spec.objects[0].bright
    assert isinstance(spec.objects[0].motion, Oscillation)


HEAD = "width = 64\nheight = 48\nduration_ms = 10\n"


@pytest.mark.parametrize(
    "text,msg",
    [
        (HEAD + "bogus = 1\n", "unknown key 'bogus' (line 4)"),
        ("width = abc\n", "width='abc' is not a number (line 1)"),
        ("width = 64\nheight = 48\n", "scene is missing duration_ms"),
        (HEAD + "# comment\nobject = bar width=2 height=2 y=1\n", "object is missing x= (line 5)"),
        (HEAD + "object = bar width=2 height=2 x=1 y=1 motion=spin\n", "unknown motion 'spin' (line 4)"),
        (HEAD + "object = bar width=2 height=2 x=1 y=1 polarity=grey\n", "polarity must be bright or dark"),
        (HEAD + "object = bar width=2 height=2 x=1 y=1 motion=piecewise segments=1:2\n", "dur_ms:vx:vy"),
        (HEAD + "just words\n", "expected key = value"),
        (HEAD + "object = bar width=0 height=2 x=1 y=1\n", "zero-size"),
    ],
)
def test_parse_errors(text: str, msg: str) -> None:
    """Errors point at the offending line."""
    with pytest.raises(SceneSpecError, match=re.escape(msg)):
        parse_scene(text)
