"""Smoke test for the `credence` Python extension.

Build and install first, for example:
    pip install maturin
    maturin build --release -m crates/py/Cargo.toml -o dist && pip install dist/credence-*.whl
"""

import json
import math
import os
import random
import tempfile

import credence


def close(a, b, tol=1e-12):
    return math.isclose(a, b, rel_tol=0.0, abs_tol=tol)


def check_similarity():
    assert credence.levenshtein("kitten", "sitting") == 3
    assert close(credence.jaro_winkler("MARTHA", "MARHTA"), 0.9611111111111111, 1e-9)
    text = "Storm closes the north bridge, drivers told to avoid the area"
    assert credence.similarity("smith-waterman", text, "RT @news: " + text) >= 0.9
    groups = credence.group_similar([text, "RT @news: " + text, "unrelated words"], "smith-waterman", 0.9)
    assert groups == [[0, 1], [2]], groups


def check_formulas():
    zero = dict(retweets_score=0, favorites_score=0, relevant_words_ratio=0, sentiment_score=0)
    assert credence.tweet_credibility(zero) == 0.0
    full = dict(retweets_score=1, favorites_score=1, relevant_words_ratio=1, sentiment_score=1)
    assert close(credence.tweet_credibility(full), 1.0)
    user = dict(u_location=1, u_url=0, u_description=1, u_verified=0, u_geo=0,
                u_age_ratio=0.5, u_avg_last20=0.4)
    assert close(credence.user_credibility(user), 0.01 + 0.03 + 0.07 * 0.5 + 0.7 * 0.4)
    assert close(credence.sentiment_term(["vneg", "neu", "vpos"]), (0.75 + 0.0 + 0.5) / 3)
    assert credence.hidden_upper_bound(1000, 4, 1, 2.0) == 100
    assert credence.trend([0.85, 0.85, 0.85]) == "Constant"
    assert credence.trend([0.965, 0.95, 0.935]) == "Decreasing"
    try:
        credence.trend([0.5])
    except ValueError:
        pass
    else:
        raise AssertionError("trend on one sample should fail")


def check_classifier():
    rng = random.Random(3)
    samples = []
    for _ in range(600):
        f = dict(retweets_score=rng.random(), favorites_score=rng.random(),
                 relevant_words_ratio=rng.random(), sentiment_score=rng.random())
        f["label"] = 1.0 if f["relevant_words_ratio"] + f["favorites_score"] > 1.0 else 0.0
        samples.append(f)
    model, accuracy = credence.Classifier.train(samples, config="C1", iterations=30000, seed=7)
    assert accuracy is not None and accuracy > 0.9, accuracy
    again, _ = credence.Classifier.train(samples, config="C1", iterations=30000, seed=7)
    assert model.to_text() == again.to_text()
    probe = dict(retweets_score=0.5, favorites_score=0.9, relevant_words_ratio=0.9, sentiment_score=0.5)
    assert model.classify(probe) == "credible"
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "model.txt")
        model.save(path)
        loaded = credence.Classifier.load(path)
        assert loaded.predict(probe) == model.predict(probe)
        assert loaded.config == "C1" and loaded.hidden == 13


def record(i, text, lat, lon):
    return {
        "tweet": {
            "id": f"t{i}", "text": text, "author_id": f"u{i % 3}",
            "retweets_no": i % 4, "favorites_no": i % 6,
            "creation_date": f"2017-03-01T{i % 24:02}:00:00Z",
            "geo": {"lat": lat, "lon": lon}, "language": "en",
        },
        "author": {
            "id": f"u{i % 3}", "has_location": True, "has_description": False,
            "has_url": False, "has_geo": True, "is_verified": False,
            "creation_date": "2011-01-01T00:00:00Z", "followers_no": 150,
        },
    }


def check_pipeline():
    score = credence.score_record(json.dumps(record(1, "Refugees reach the border", 40.0, -100.0)))
    assert 0.0 <= score <= 1.0
    with tempfile.TemporaryDirectory() as d:
        src = os.path.join(d, "in.jsonl")
        with open(src, "w") as f:
            for i in range(40):
                f.write(json.dumps(record(i, f"Report {i}: refugees reach the border town", 40.0, -100.0)) + "\n")
        one = json.loads(credence.run_pipeline(src, os.path.join(d, "a"), threads=1))
        four = json.loads(credence.run_pipeline(src, os.path.join(d, "b"), threads=4))
        assert one == four and one["accepted"] == 40
        for name in one["outputs"]:
            with open(os.path.join(d, "a", name), "rb") as x, open(os.path.join(d, "b", name), "rb") as y:
                assert x.read() == y.read(), name


if __name__ == "__main__":
    check_similarity()
    check_formulas()
    check_classifier()
    check_pipeline()
    print("python smoke test: ok")
