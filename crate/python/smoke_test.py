"""Smoke test for the `xmodal` Python extension.

Builds the extension with cargo, stages it as `xmodal.so` in a temporary
directory and exercises every exposed class and function once:

    python3 python/smoke_test.py            # build, then test
    python3 python/smoke_test.py --no-build # reuse target/release
"""

import argparse
import math
import os
import shutil
import subprocess
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def stage_module(build: bool) -> str:
    if build:
        subprocess.run(
            ["cargo", "build", "--release", "-p", "xmodal-py", "--features", "extension-module"],
            cwd=ROOT,
            check=True,
        )
    lib = os.path.join(ROOT, "target", "release", "libxmodal_py.so")
    if not os.path.exists(lib):
        sys.exit(f"extension not found at {lib}; run without --no-build")
    staging = tempfile.mkdtemp(prefix="xmodal-smoke-")
    shutil.copy(lib, os.path.join(staging, "xmodal.so"))
    return staging


def expect_error(code, fn, *args, **kwargs):
    import xmodal

    try:
        fn(*args, **kwargs)
    except xmodal.XmodalError as e:
        assert str(e).startswith(f"[{code}]"), str(e)
        return
    raise AssertionError(f"expected XmodalError[{code}]")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--no-build", action="store_true", help="skip cargo build")
    args = parser.parse_args()
    sys.path.insert(0, stage_module(not args.no_build))

    import xmodal

    n, dim = 12, 6
    text_rows = [[1.0 if d == i % dim else 0.1 * ((i + d) % 3) for d in range(dim)] for i in range(n)]
    image_rows = [[v + 0.01 for v in row] for row in text_rows]
    text = xmodal.EmbeddingSet("text", [f"t{i}" for i in range(n)], text_rows)
    image = xmodal.EmbeddingSet("image", [f"i{i}" for i in range(n)], image_rows)
    assert len(text) == n and text.dim == dim and text.modality == "text"

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "text.xeb")
        text.save(path)
        back = xmodal.EmbeddingSet.load(path)
        assert back.ids == text.ids and back.to_rows() == text.to_rows()

        manifest = os.path.join(tmp, "pairs.tsv")
        with open(manifest, "w") as f:
            f.writelines(f"t{i}\ti{i}\n" for i in range(n))
        corpus = xmodal.Corpus.from_manifest(text, image, manifest)
        assert len(corpus) == n

        report = corpus.evaluate("t2i", metric="cosine", ks=[1, 5])
        assert report["query_count"] == n
        assert report["at_k"][0]["k"] == 1
        assert 0.0 <= report["at_k"][0]["hit_rate"] <= 1.0

        m = xmodal.score_matrix("euclidean", text, image)
        assert len(m) == n and len(m[0]) == n

        gap = xmodal.centroid_gap(text, image)
        assert math.isclose(gap, 0.01 * math.sqrt(dim), rel_tol=1e-5), gap
        w = xmodal.wasserstein2_batched(text, image, batch_size=4, seed=1)
        assert w["batches"] == 3 and w["dropped"] == 0
        assert xmodal.wasserstein2_exact(text, image) >= 0.0

        stat, p = xmodal.two_proportion_chisq(30, 100, 30, 100)
        assert stat == 0.0 and p == 1.0
        assert xmodal.holm_adjust([0.01, 0.04, 0.03]) == [0.03, 0.06, 0.06]

        train, val, _test = corpus.split(0.6, 0.2, 0.2, 0)
        model, history = xmodal.ScorerModel.train(
            train, val, [8], lr=1e-3, batch_size=4, max_epochs=2, seed=0
        )
        assert model.hidden_sizes == [8] and history["epochs"]
        s = model.forward(text.row(0), image.row(0))
        assert -1.0 <= s <= 1.0
        model_path = os.path.join(tmp, "model.json")
        model.save(model_path)
        loaded = xmodal.ScorerModel.load(model_path)
        assert loaded.score_matrix(text, image) == model.score_matrix(text, image)
        assert corpus.evaluate("i2t", model=loaded, ks=[1])["scorer"] == "mlp"

    expect_error("dim_mismatch", xmodal.centroid_gap, text, xmodal.EmbeddingSet("image", ["x"], [[1.0, 2.0]]))
    expect_error("duplicate_id", xmodal.EmbeddingSet, "text", ["a", "a"], [[1.0], [2.0]])
    expect_error("k_out_of_range", corpus.evaluate, "t2i", metric="cosine", ks=[n + 1])
    print("xmodal python smoke test: ok")


if __name__ == "__main__":
    main()
