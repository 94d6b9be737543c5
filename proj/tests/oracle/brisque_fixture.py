"""Trains a small BRISQUE regression fixture and records its reference scores.

Training images are skimage samples that are not part of the natural test
set, corrupted with Gaussian noise and blur at several strengths; the target
is a synthetic quality score (0 pristine, up to 100). Outputs, in libsvm text
formats:

    <out>/brisque_fixture.model   epsilon-SVR, RBF kernel
    <out>/brisque_fixture.range   svm-scale feature ranges, scaled to [-1, 1]

and adds "brisque_score" entries to the golden file.

    python3 tests/oracle/brisque_fixture.py tests/data tests/data/iqa_golden.json
"""

import json
import sys
from pathlib import Path

import numpy as np
import skimage.data as sd
from scipy import ndimage
from sklearn.svm import SVR

sys.path.insert(0, str(Path(__file__).parent))
import iqa_oracle  # noqa: E402


def training_images():
    names = ["coins", "moon", "immunohistochemistry", "hubble_deep_field", "cat", "page", "horse", "text", "brick",
             "grass", "gravel", "colorwheel"]
    for n in names:
        img = np.asarray(getattr(sd, n)(), dtype=np.float64)
        if img.ndim == 3:
            img = 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]
        if img.max() <= 1.0:
            img = img * 255.0
        h, w = img.shape
        s = min(h, w, 256)
        t, l = (h - s) // 2, (w - s) // 2
        yield img[t:t + s, l:l + s]


def main(out_dir, golden_path):
    rng = np.random.default_rng(7)
    X, y = [], []
    for img in training_images():
        for level in range(5):
            noisy = np.clip(img + rng.normal(0, 6.0 * level, img.shape), 0, 255)
            X.append(iqa_oracle.brisque(np.round(noisy)))
            y.append(20.0 * level)
            if level:
                blurred = ndimage.gaussian_filter(img, 0.8 * level, mode="reflect")
                X.append(iqa_oracle.brisque(np.round(blurred)))
                y.append(20.0 * level)
    X = np.asarray(X)
    lo, hi = X.min(axis=0), X.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    Xs = -1.0 + 2.0 * (X - lo) / span
    gamma = 0.05
    svr = SVR(kernel="rbf", gamma=gamma, C=256.0, epsilon=1.0).fit(Xs, y)

    out = Path(out_dir)
    lines = ["svm_type epsilon_svr", "kernel_type rbf", f"gamma {gamma!r}", "nr_class 2",
             f"total_sv {len(svr.support_)}", f"rho {-float(svr.intercept_[0])!r}", "SV"]
    for coef, sv in zip(svr.dual_coef_[0], svr.support_vectors_):
        lines.append(f"{float(coef)!r} " + " ".join(f"{i + 1}:{float(v)!r}" for i, v in enumerate(sv)))
    (out / "brisque_fixture.model").write_text("\n".join(lines) + "\n")
    rng_lines = ["x", "-1 1"] + [f"{i + 1} {float(a)!r} {float(b)!r}" for i, (a, b) in enumerate(zip(lo, hi))]
    (out / "brisque_fixture.range").write_text("\n".join(rng_lines) + "\n")

    golden = json.loads(Path(golden_path).read_text())
    for name, entry in golden["images"].items():
        f = np.asarray(entry["brisque_features"])
        fs = np.where(hi > lo, -1.0 + 2.0 * (f - lo) / span, 0.0)
        entry["brisque_score"] = float(svr.predict(fs[None, :])[0])
    Path(golden_path).write_text(json.dumps(golden, indent=2) + "\n")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
