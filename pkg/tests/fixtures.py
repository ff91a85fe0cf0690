"""Shared fixture data and builders for the test suite.

The two scripted transcripts mimic simultaneous podcasts: one about
machine intelligence (left, 135 deg) and one about personal finance
(right, 45 deg). Sentence timing is one second per segment with the right
stream offset by half a second so the streams interleave.
"""

from __future__ import annotations

import json
from pathlib import Path

AI_SENTENCES = [
    "Welcome back to the show about machine intelligence.",
    "Today our guest studies how neural networks learn.",
    "He argues that scale alone will not get us there.",
    "Self supervised learning lets AI absorb structure from raw video.",
    "Predictive world models remain the missing ingredient.",
    "Systems must learn physics the way infants do.",
    "Our AI conversation keeps returning to scale.",
    "Training an AI model end to end still surprises the AI community.",
    "Every AI conversation eventually lands on open source AI.",
    "Robotics will benefit once agents can plan hierarchically.",
    "Benchmarks reward memorization rather than understanding.",
    "The lab released new checkpoints for researchers last week.",
    "Energy based objectives could replace token prediction.",
    "Hardware costs still gate academic research labs.",
    "Students should master mathematics before touching frameworks.",
    "Interpretability tooling lags far behind capability gains.",
    "Regulation debates often conflate apps with models.",
    "He stays optimistic about augmenting human reasoning.",
]

FINANCE_SENTENCES = [
    "Thanks for tuning in to the wealth hour.",
    "We open with the bond market selloff this morning.",
    "Treasury yields touched their highest level in months.",
    "The central bank kept interest rates unchanged again.",
    "Higher interest rates finally reward savers handsomely.",
    "Falling interest rates would reignite mortgage borrowing.",
    "Diversification still beats chasing single hot stocks.",
    "Index funds quietly compound while traders churn fees.",
    "Emergency savings should cover six months of expenses.",
    "Insurance gaps wreck more plans than market crashes.",
    "College accounts grow tax free when used for tuition.",
    "Retirement targets depend on your expected spending.",
    "Dollar cost averaging removes timing anxiety from investing.",
    "Estate documents matter more than portfolio tweaks.",
    "Credit card balances erase any gains from stock picks.",
    "A good advisor explains fees in plain language.",
    "Rebalancing once a year keeps risk in check.",
    "Compounding rewards patience more than brilliance.",
]

GOLDEN_QUERY = "What did I miss when I was listening to the AI conversation?"

PARITY_QUERIES = [
    GOLDEN_QUERY,
    "What did I miss while following the AI conversation?",
    "Tell me about the AI conversation.",
    "What happened regarding interest rates?",
    "What did I miss during the talk on interest rates?",
    "Summarize the discussion about interest rates.",
    "What was said regarding the AI conversation?",
    "Catch me up on interest rates.",
    "I was following the AI conversation.",
    "Fill me in on the AI conversation.",
]

STREAM_PLAN = {"left": 135.0, "right": 45.0}
FIXTURE_DURATION_S = 20.0


def left_segments() -> list[dict]:
    return [{"text": s, "start": float(i), "end": float(i + 1)}
            for i, s in enumerate(AI_SENTENCES)]


def right_segments() -> list[dict]:
    return [{"text": s, "start": i + 0.5, "end": i + 1.5}
            for i, s in enumerate(FINANCE_SENTENCES)]


def write_transcript_fixtures(directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "left.json").write_text(json.dumps(left_segments()))
    (directory / "right.json").write_text(json.dumps(right_segments()))
    return directory


def service_config(sessions_root, fixture_dir):
    from beamrecall.config import ServiceConfig

    config = ServiceConfig()
    config.sessions_root = str(sessions_root)
    config.asr.kind = "fixture"
    config.asr.fixture_path = str(fixture_dir)
    return config


def build_session(tmp_root) -> tuple[str, object]:
    """Simulate the two-speaker scene, ingest it, return (session_id, store)."""
    from beamrecall.audio import write_wav
    from beamrecall.session import SessionStore
    from beamrecall.simulate import SceneSource, SceneSpec, simulate_scene
    from beamrecall.synth import synth_speech

    tmp_root = Path(tmp_root)
    fixture_dir = write_transcript_fixtures(tmp_root / "transcripts")
    config = service_config(tmp_root / "sessions", fixture_dir)

    fs = 16000
    left_speech = synth_speech(FIXTURE_DURATION_S, fs, seed=101)
    right_speech = synth_speech(FIXTURE_DURATION_S, fs, seed=202)
    scene = SceneSpec(
        sources=[
            SceneSource(STREAM_PLAN["left"], left_speech),
            SceneSource(STREAM_PLAN["right"], right_speech),
        ],
        sample_rate_hz=fs,
    )
    mixture, _ = simulate_scene(scene)
    wav_path = tmp_root / "capture.wav"
    write_wav(mixture, wav_path, bit_depth="float32")

    store = SessionStore(config.sessions_root, config)
    session_id = store.ingest(wav_path, dict(STREAM_PLAN))
    return session_id, store
