"""
Run configuration in INI form.

Sections mirror the configuration types::

    [SceneSpec]        synthetic input; preset = demo or explicit
    [target]           explicit scenes only
    [interferer.N]     explicit scenes only, N = 0, 1, ...
    [StftConfig]       frame_size, hop, window
    [SegmenterConfig]  penalty_c, c_rel, delta, tau, max_window
    [RunConfig]        windows, output_dir, seed, rtf, input_wav, ...

Exactly one input mode is allowed: a ``[SceneSpec]`` section or
``RunConfig.input_wav``. Positions are written ``x, y, z``; lists of
positions and source segments are separated by ``;`` and a segment is
``start_sample: x, y, z``.
"""

import configparser
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

from .errors import ParameterError
from .scene import ArrayGeometry, SceneSpec, SourceTrack, demo_scene
from .segmenter import SegmenterConfig
from .stft import StftConfig

__all__ = ["RunConfig", "load_config", "parse_config", "DEMO_INI", "DEFAULT_WINDOWS",
           "parse_int_list", "parse_rtf_mode"]

DEFAULT_WINDOWS = (20, 70, 120, 200, 400, 1200)

DEMO_INI = """\
# Moving-interferer demo: static target, 3 interferers jumping every 4 s, 40 s.
[SceneSpec]
preset = demo
duration_s = 40
jump_s = 4
n_interferers = 3
sample_rate = 32000
n_mics = 4
radius = 0.3
interferer_level_db = 10
noise_level_db = -30
target_signal = noise
interferer_signal = noise

[StftConfig]
frame_size = 1024
hop = 512
window = sqrt-hann

[SegmenterConfig]
c_rel = 2.0
tau = 2
max_window = 128

[RunConfig]
windows = 20, 70, 120, 200, 400, 1200
output_dir = segbeam_out
seed = 0
rtf = oracle
"""

_DEMO_KEYS = {"duration_s": float, "jump_s": float, "n_interferers": int, "sample_rate": float,
              "n_mics": int, "radius": float, "interferer_level_db": float,
              "noise_level_db": float, "target_signal": str, "interferer_signal": str}


@dataclass
class RunConfig:
    scene: Optional[SceneSpec] = None
    input_wav: Optional[str] = None
    target_wav: Optional[str] = None
    changes_path: Optional[str] = None
    stft: StftConfig = field(default_factory=StftConfig)
    segmenter: SegmenterConfig = field(default_factory=SegmenterConfig)
    windows: Tuple[int, ...] = DEFAULT_WINDOWS
    output_dir: str = "segbeam_out"
    seed: int = 0
    rtf: str = "oracle"
    rtf_target_interval: Optional[Tuple[float, float]] = None
    rtf_noise_interval: Optional[Tuple[float, float]] = None
    reference_index: int = 0
    verbose_partitions: bool = False
    wav_format: str = "float32"

    def __post_init__(self):
        if (self.scene is None) == (self.input_wav is None):
            raise ParameterError("exactly one input mode is required: a [SceneSpec] section or RunConfig.input_wav")
        if not self.windows or any(k < 1 for k in self.windows):
            raise ParameterError(f"RunConfig.windows must be positive integers, got {self.windows}")
        parse_rtf_mode(self.rtf)
        if self.wav_format not in ("pcm16", "float32"):
            raise ParameterError(f"RunConfig.wav_format must be pcm16 or float32, got {self.wav_format!r}")


def parse_int_list(text, name="list"):
    try:
        values = tuple(int(v) for v in str(text).replace(";", ",").split(",") if v.strip())
    except ValueError:
        raise ParameterError(f"{name} must be a comma separated list of integers, got {text!r}") from None
    if not values:
        raise ParameterError(f"{name} must not be empty")
    return values


def parse_rtf_mode(text):
    """Return ``(mode, path)`` for ``oracle``, ``estimate`` or ``sidecar:PATH``."""
    if text in ("oracle", "estimate"):
        return text, None
    if text.startswith("sidecar:") and len(text) > len("sidecar:"):
        return "sidecar", text[len("sidecar:"):]
    raise ParameterError(f"rtf must be oracle, estimate or sidecar:PATH, got {text!r}")


def _vec(text, name):
    try:
        v = tuple(float(t) for t in text.split(","))
    except ValueError:
        raise ParameterError(f"{name}: expected 'x, y, z', got {text!r}") from None
    if len(v) != 3:
        raise ParameterError(f"{name}: expected 3 coordinates, got {len(v)}")
    return v


def _interval(text, name):
    try:
        a, b = (float(t) for t in text.split(","))
    except ValueError:
        raise ParameterError(f"{name}: expected 'start_s, stop_s', got {text!r}") from None
    if not 0 <= a < b:
        raise ParameterError(f"{name}: need 0 <= start < stop, got {a}, {b}")
    return a, b


def _get(section, key, conv, name):
    try:
        return conv(section[key])
    except ValueError:
        raise ParameterError(f"{name}.{key}: cannot parse {section[key]!r}") from None


def _source(section, name):
    segs = []
    if "segments" in section:
        for part in section["segments"].split(";"):
            if not part.strip():
                continue
            start, _, pos = part.partition(":")
            try:
                start = int(start)
            except ValueError:
                raise ParameterError(f"{name}.segments: bad start in {part.strip()!r}") from None
            segs.append((start, _vec(pos, f"{name}.segments")))
    elif "position" in section:
        segs.append((0, _vec(section["position"], f"{name}.position")))
    else:
        raise ParameterError(f"{name}: needs 'position' or 'segments'")
    kw = {"signal": section.get("signal", "speech")}
    if "level_db" in section:
        kw["level_db"] = _get(section, "level_db", float, name)
    if "tone_hz" in section:
        kw["tone_hz"] = _get(section, "tone_hz", float, name)
    if "path" in section:
        kw["path"] = section["path"]
    return SourceTrack(segs, **kw)


def _scene(cp, seed):
    sec = cp["SceneSpec"]
    preset = sec.get("preset", "explicit")
    if preset == "demo":
        unknown = set(sec) - set(_DEMO_KEYS) - {"preset"}
        if unknown:
            raise ParameterError(f"SceneSpec: unknown demo keys {sorted(unknown)}")
        kw = {k: _get(sec, k, conv, "SceneSpec") for k, conv in _DEMO_KEYS.items() if k in sec}
        return demo_scene(seed=seed, **kw)
    if preset != "explicit":
        raise ParameterError(f"SceneSpec.preset must be demo or explicit, got {preset!r}")
    if "mic_positions" not in sec:
        raise ParameterError("SceneSpec.mic_positions is required for explicit scenes")
    mics = [_vec(t, "SceneSpec.mic_positions") for t in sec["mic_positions"].split(";") if t.strip()]
    geometry = ArrayGeometry(mics, _get(sec, "sound_speed", float, "SceneSpec") if "sound_speed" in sec else 343.0)
    if "target" not in cp:
        raise ParameterError("explicit scenes need a [target] section")
    target = _source(cp["target"], "target")
    names = sorted((s for s in cp.sections() if s.startswith("interferer.")),
                   key=lambda s: int(s.split(".", 1)[1]) if s.split(".", 1)[1].isdigit() else -1)
    for s in names:
        if not s.split(".", 1)[1].isdigit():
            raise ParameterError(f"section [{s}]: interferer sections must be named interferer.N")
    interferers = [_source(cp[s], s) for s in names]
    kw = {}
    for key in ("noise_level_db", "duration_s", "sample_rate"):
        if key in sec:
            kw[key] = _get(sec, key, float, "SceneSpec")
    return SceneSpec(geometry=geometry, target=target, interferers=interferers, seed=seed, **kw)


def parse_config(text, overrides=None):
    """
    Build a RunConfig from INI text. ``overrides`` maps flat keys (``seed``,
    ``output_dir``, ``windows``, ``rtf``, ``penalty_c``, ``tau``,
    ``max_window``, ``delta``, ``c_rel``, ``verbose_partitions``) to values
    that replace the file's settings.
    """
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ParameterError(f"config syntax error: {exc}") from None
    known = {"SceneSpec", "target", "StftConfig", "SegmenterConfig", "RunConfig"}
    for s in cp.sections():
        if s not in known and not s.startswith("interferer."):
            raise ParameterError(f"unknown config section [{s}]")
    run = cp["RunConfig"] if "RunConfig" in cp else {}

    seed = overrides.get("seed", _get(run, "seed", int, "RunConfig") if "seed" in run else 0)
    scene = _scene(cp, seed) if "SceneSpec" in cp else None

    st = cp["StftConfig"] if "StftConfig" in cp else {}
    stft_kw = {k: _get(st, k, int, "StftConfig") for k in ("frame_size", "hop") if k in st}
    if "window" in st:
        stft_kw["window"] = st["window"]
    if scene is not None:
        stft_kw["sample_rate"] = scene.sample_rate
    stft = StftConfig(**stft_kw)

    sg = cp["SegmenterConfig"] if "SegmenterConfig" in cp else {}
    seg_kw = {}
    for key, conv in (("penalty_c", float), ("c_rel", float), ("delta", float),
                      ("tau", int), ("max_window", int)):
        if key in sg:
            seg_kw[key] = _get(sg, key, conv, "SegmenterConfig")
        if key in overrides:
            seg_kw[key] = overrides[key]
    segmenter = SegmenterConfig(**seg_kw)

    kw = {"scene": scene, "stft": stft, "segmenter": segmenter, "seed": seed}
    for key in ("input_wav", "target_wav", "changes_path", "output_dir", "rtf", "wav_format"):
        if key in run:
            kw[key] = run[key]
    if "windows" in run:
        kw["windows"] = parse_int_list(run["windows"], "RunConfig.windows")
    if "reference_index" in run:
        kw["reference_index"] = _get(run, "reference_index", int, "RunConfig")
    for key in ("rtf_target_interval", "rtf_noise_interval"):
        if key in run:
            kw[key] = _interval(run[key], f"RunConfig.{key}")
    if "verbose_partitions" in run:
        try:
            kw["verbose_partitions"] = cp.getboolean("RunConfig", "verbose_partitions")
        except ValueError:
            raise ParameterError("RunConfig.verbose_partitions must be a boolean") from None
    for key in ("output_dir", "rtf", "verbose_partitions"):
        if key in overrides:
            kw[key] = overrides[key]
    if "windows" in overrides:
        kw["windows"] = tuple(overrides["windows"])
    return RunConfig(**kw)


def load_config(path=None, overrides=None):
    """Read ``path`` (the built-in demo when None) and apply ``overrides``."""
    if path is None:
        return parse_config(DEMO_INI, overrides)
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ParameterError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, overrides)


def with_segmenter(run, **kw):
    return replace(run, segmenter=replace(run.segmenter, **kw))
