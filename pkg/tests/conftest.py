import textwrap

import pytest

STATIONARY_INI = textwrap.dedent("""\
    [SceneSpec]
    mic_positions = 2.0, 2.0, 1.0; 2.3, 2.0, 1.0; 2.0, 2.3, 1.0; 2.3, 2.3, 1.0
    duration_s = 6
    sample_rate = 16000
    noise_level_db = -30

    [target]
    position = 4.0, 3.0, 1.3
    signal = noise

    [interferer.0]
    position = 0.5, 3.5, 1.0
    signal = noise
    level_db = 10

    [SegmenterConfig]
    max_window = 32

    [RunConfig]
    windows = 20, 70, 200
    """)

JUMP_INI = textwrap.dedent("""\
    [SceneSpec]
    preset = demo
    duration_s = 12
    sample_rate = 16000

    [SegmenterConfig]
    tau = 2
    max_window = 64

    [RunConfig]
    windows = 20, 70, 120, 200, 400, 1200
    """)


@pytest.fixture
def write_config(tmp_path):
    def make(text, name="run.ini"):
        path = tmp_path / name
        path.write_text(text)
        return str(path)
    return make
