"""Black-box classifiers: anything mapping a ``(n, L)`` batch of raw series
to ``(n, C)`` probability rows.

Explainers only ever call :meth:`Classifier.predict_proba`.
"""

import json
import logging
import queue
import shlex
import subprocess
import threading
from dataclasses import asdict, dataclass

import numpy as np

from .errors import (
    ExternalClassifierError,
    FormatError,
    InvalidArgumentError,
    TrainingDivergedError,
)
from .signal import frame_count, make_window, stft_batch

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
PREDICT_CHUNK = 8192


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class Classifier:
    kind = "base"

    def __init__(self, class_count, input_length):
        self.class_count = int(class_count)
        self.input_length = int(input_length)

    def _as_batch(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2:
            raise InvalidArgumentError("expected a (batch, length) array")
        if X.shape[0] and X.shape[1] != self.input_length:
            raise InvalidArgumentError(
                f"series length {X.shape[1]} != classifier input length "
                f"{self.input_length}")
        return X

    def predict_proba(self, X):
        X = self._as_batch(X)
        if X.shape[0] == 0:
            return np.zeros((0, self.class_count))
        if X.shape[0] <= PREDICT_CHUNK:
            return self._predict(X)
        return np.concatenate([self._predict(X[i:i + PREDICT_CHUNK])
                               for i in range(0, X.shape[0], PREDICT_CHUNK)])

    def predict(self, X):
        return self.predict_proba(X).argmax(axis=1)

    def _predict(self, X):
        raise NotImplementedError

    def parameters(self):
        return {}

    def to_dict(self):
        params = {}
        for k, v in self.parameters().items():
            if isinstance(v, np.ndarray):
                params[k] = {"shape": list(v.shape), "data": v.ravel().tolist()}
            else:
                params[k] = v
        return {"format_version": FORMAT_VERSION, "kind": self.kind,
                "class_count": self.class_count, "input_length": self.input_length,
                "parameters": params}


class FunctionClassifier(Classifier):
    """Wraps a plain ``fn(X) -> probabilities`` callable."""

    kind = "function"

    def __init__(self, fn, class_count, input_length):
        super().__init__(class_count, input_length)
        self.fn = fn

    def _predict(self, X):
        return np.asarray(self.fn(X), dtype=float)


class SoftmaxClassifier(Classifier):
    kind = "softmax"

    def __init__(self, W, b):
        W = np.asarray(W, dtype=float)
        super().__init__(W.shape[1], W.shape[0])
        self.W = W
        self.b = np.asarray(b, dtype=float)

    def _predict(self, X):
        return softmax(X @ self.W + self.b)

    def parameters(self):
        return {"W": self.W, "b": self.b}


class MLPClassifier(Classifier):
    """One ReLU hidden layer followed by a softmax output layer."""

    kind = "mlp"

    def __init__(self, W1, b1, W2, b2):
        W1 = np.asarray(W1, dtype=float)
        W2 = np.asarray(W2, dtype=float)
        super().__init__(W2.shape[1], W1.shape[0])
        self.W1, self.b1 = W1, np.asarray(b1, dtype=float)
        self.W2, self.b2 = W2, np.asarray(b2, dtype=float)

    def _predict(self, X):
        h = np.maximum(X @ self.W1 + self.b1, 0.0)
        return softmax(h @ self.W2 + self.b2)

    def parameters(self):
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}


class BandEnergyClassifier(Classifier):
    """Deterministic rule: STFT energy inside each class's time-frequency boxes.

    ``band_defs[c]`` is a list of ``((m0, m1), (k0, k1))`` half-open boxes.
    Probabilities are ``softmax(sharpness * E_c / mean(E))``; an all-zero
    energy vector gives the uniform row.
    """

    kind = "band-rule"

    def __init__(self, band_defs, window_size, hop, input_length, sharpness=10.0):
        super().__init__(len(band_defs), input_length)
        if self.class_count < 2:
            raise InvalidArgumentError("band rule needs at least two classes")
        self.window = make_window("hann", window_size)
        self.hop = int(hop)
        self.sharpness = float(sharpness)
        n_frames = frame_count(input_length, window_size, hop)
        n_bins = window_size // 2 + 1
        self.band_defs = []
        masks = np.zeros((self.class_count, n_frames, n_bins))
        for c, boxes in enumerate(band_defs):
            clean = []
            for (m0, m1), (k0, k1) in boxes:
                if not (0 <= m0 < m1 <= n_frames and 0 <= k0 < k1 <= n_bins):
                    raise InvalidArgumentError(
                        f"class {c}: box frames [{m0},{m1}) bins [{k0},{k1}) outside "
                        f"the {n_frames}x{n_bins} grid")
                masks[c, m0:m1, k0:k1] = 1.0
                clean.append(((int(m0), int(m1)), (int(k0), int(k1))))
            self.band_defs.append(clean)
        self._masks = masks.reshape(self.class_count, -1)

    def energies(self, X):
        X = self._as_batch(X)
        power = np.abs(stft_batch(X, self.window, self.hop)) ** 2
        return power.reshape(X.shape[0], -1) @ self._masks.T

    def _predict(self, X):
        E = self.energies(X)
        mean = E.mean(axis=1, keepdims=True)
        scale = np.divide(self.sharpness, mean, out=np.zeros_like(mean), where=mean > 0)
        return softmax(E * scale)

    def parameters(self):
        return {"band_defs": self.band_defs, "window_size": self.window.size,
                "hop": self.hop, "sharpness": self.sharpness}


def band_energy_classifier(band_defs, window_size=16, hop=8, input_length=None,
                           sharpness=10.0):
    if input_length is None:
        raise InvalidArgumentError("input_length is required")
    return BandEnergyClassifier(band_defs, window_size, hop, input_length, sharpness)


class ExternalClassifier(Classifier):
    """Child process speaking newline-delimited JSON on stdin/stdout.

    One batch is in flight at a time; concurrent callers queue on a lock.
    """

    kind = "external"
    ROW_SUM_TOL = 1e-3

    def __init__(self, command, timeout=60.0, class_count=None, input_length=None):
        self.command = command
        self.timeout = float(timeout)
        self._lock = threading.Lock()
        self._next_id = 1
        self._stderr = []
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        try:
            self._proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.PIPE, text=True, bufsize=1)
        except OSError as exc:
            raise ExternalClassifierError(f"cannot start {command!r}: {exc}") from None
        self._lines = queue.Queue()
        threading.Thread(target=self._pump_stdout, daemon=True).start()
        threading.Thread(target=self._pump_stderr, daemon=True).start()
        reply = self._exchange({"type": "hello"})
        if reply.get("type") != "hello":
            self._fail(f"bad handshake reply {reply!r}")
        try:
            cc, il = int(reply["class_count"]), int(reply["input_length"])
        except (KeyError, TypeError, ValueError):
            self._fail(f"handshake lacks class_count/input_length: {reply!r}")
        if class_count is not None and cc != class_count:
            self._fail(f"child reports {cc} classes, expected {class_count}")
        if input_length is not None and il != input_length:
            self._fail(f"child reports input length {il}, expected {input_length}")
        super().__init__(cc, il)

    def _pump_stdout(self):
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _pump_stderr(self):
        for line in self._proc.stderr:
            self._stderr.append(line)

    def _fail(self, message):
        self.close()
        raise ExternalClassifierError(message, "".join(self._stderr))

    def _exchange(self, message):
        if self._proc.poll() is not None:
            self._fail(f"child exited with status {self._proc.returncode}")
        try:
            self._proc.stdin.write(json.dumps(message) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError):
            self._fail("child closed its input")
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            self._fail(f"no reply within {self.timeout:g} s")
        if line is None:
            self._proc.wait(timeout=5)
            self._fail(f"child exited with status {self._proc.returncode}")
        try:
            return json.loads(line)
        except json.JSONDecodeError:
            self._fail(f"malformed reply {line.strip()[:200]!r}")

    def _predict(self, X):
        with self._lock:
            req_id = self._next_id
            self._next_id += 1
            reply = self._exchange({"type": "predict", "id": req_id,
                                    "signals": X.tolist()})
        if reply.get("type") != "probs":
            self._fail(f"unexpected reply type {reply.get('type')!r}")
        if reply.get("id") != req_id:
            self._fail(f"reply id {reply.get('id')!r} does not match request {req_id}")
        try:
            rows = np.asarray(reply["rows"], dtype=float)
        except (KeyError, TypeError, ValueError):
            self._fail("reply rows are not a numeric matrix")
        if rows.shape != (X.shape[0], self.class_count):
            self._fail(f"reply rows have shape {rows.shape}, expected "
                       f"{(X.shape[0], self.class_count)}")
        if not np.all(np.isfinite(rows)) or rows.min() < 0:
            self._fail("reply rows contain negative or non-finite probabilities")
        sums = rows.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > self.ROW_SUM_TOL):
            bad = int(np.argmax(np.abs(sums - 1.0)))
            self._fail(f"row {bad} sums to {sums[bad]:.6g}, not 1")
        return rows

    def close(self):
        proc = getattr(self, "_proc", None)
        if proc is None or proc.poll() is not None:
            return
        try:
            proc.stdin.close()
            proc.wait(timeout=2)
        except Exception:
            proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        self.close()

    def parameters(self):
        return {"command": self.command, "timeout": self.timeout}


def external_classifier(command, timeout=60.0, class_count=None, input_length=None):
    return ExternalClassifier(command, timeout, class_count, input_length)


# -- persistence -------------------------------------------------------------

def _array(p):
    return np.asarray(p["data"], dtype=float).reshape(p["shape"])


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh)
        fh.write("\n")


def model_from_dict(doc):
    if doc.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"unsupported model format_version {doc.get('format_version')!r}")
    kind, p = doc.get("kind"), doc.get("parameters", {})
    if kind == "softmax":
        return SoftmaxClassifier(_array(p["W"]), _array(p["b"]))
    if kind == "mlp":
        return MLPClassifier(_array(p["W1"]), _array(p["b1"]),
                             _array(p["W2"]), _array(p["b2"]))
    if kind == "band-rule":
        return BandEnergyClassifier(p["band_defs"], p["window_size"], p["hop"],
                                    doc["input_length"], p["sharpness"])
    if kind == "external":
        return ExternalClassifier(p["command"], p.get("timeout", 60.0),
                                  doc["class_count"], doc["input_length"])
    raise FormatError(f"unknown model kind {kind!r}")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


# -- training ----------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    kind: str = "mlp"
    hidden_width: int = 128
    learning_rate: float = 2e-4
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("mlp", "softmax"):
            raise InvalidArgumentError(f"trainable kinds are mlp/softmax, not {self.kind!r}")
        for name in ("hidden_width", "batch_size", "max_epochs", "patience"):
            if getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must be positive")
        if not self.learning_rate > 0:
            raise InvalidArgumentError("learning_rate must be positive")


class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _init_params(cfg, n_in, n_out, rng):
    if cfg.kind == "softmax":
        return [np.zeros((n_in, n_out)), np.zeros(n_out)]
    h = cfg.hidden_width
    return [rng.standard_normal((n_in, h)) * np.sqrt(2.0 / n_in), np.zeros(h),
            rng.standard_normal((h, n_out)) * np.sqrt(2.0 / h), np.zeros(n_out)]


def _forward_backward(kind, params, X, Y):
    """Mean cross-entropy and its gradients for one mini-batch."""
    n = X.shape[0]
    if kind == "softmax":
        W, b = params
        P = softmax(X @ W + b)
        loss = -np.mean(np.log(P[Y.astype(bool)] + 1e-300))
        d = (P - Y) / n
        return loss, [X.T @ d, d.sum(axis=0)]
    W1, b1, W2, b2 = params
    a = X @ W1 + b1
    h = np.maximum(a, 0.0)
    P = softmax(h @ W2 + b2)
    loss = -np.mean(np.log(P[Y.astype(bool)] + 1e-300))
    d2 = (P - Y) / n
    dh = (d2 @ W2.T) * (a > 0)
    return loss, [X.T @ dh, dh.sum(axis=0), h.T @ d2, d2.sum(axis=0)]


def _build(kind, params):
    return SoftmaxClassifier(*params) if kind == "softmax" else MLPClassifier(*params)


def classification_metrics(y_true, y_pred, class_count):
    """Accuracy plus macro-averaged precision, recall and F1."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    prec, rec, f1 = [], [], []
    for c in range(class_count):
        tp = np.sum((y_pred == c) & (y_true == c))
        fp = np.sum((y_pred == c) & (y_true != c))
        fn = np.sum((y_pred != c) & (y_true == c))
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        prec.append(p)
        rec.append(r)
        f1.append(2 * p * r / (p + r) if p + r else 0.0)
    acc = float(np.mean(y_true == y_pred)) if y_true.size else 0.0
    return {"accuracy": acc, "precision": float(np.mean(prec)),
            "recall": float(np.mean(rec)), "f1": float(np.mean(f1))}


def train_classifier(train, val, cfg=None):
    """Mini-batch Adam with early stopping on validation accuracy.

    Returns ``(model, metrics)`` where ``model`` holds the parameters of the
    best validation epoch.
    """
    cfg = cfg or TrainConfig()
    if train.length != val.length or train.class_count != val.class_count:
        raise InvalidArgumentError("train and val must share length and class count")
    present = np.unique(train.y)
    if train.class_count < 2 or present.size < 2:
        raise InvalidArgumentError("training needs at least two classes")
    rng = np.random.default_rng(cfg.seed)
    C = train.class_count
    params = _init_params(cfg, train.length, C, rng)
    opt = _Adam(params, cfg.learning_rate)
    Y = np.eye(C)[train.y]

    best = -1.0
    best_params, best_epoch, stale = None, 0, 0
    history = []
    Y_val = np.eye(C)[val.y]
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(train))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = _forward_backward(cfg.kind, params, train.X[idx], Y[idx])
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
            opt.step(grads)
            total += loss * len(idx)
        P_val = _build(cfg.kind, params).predict_proba(val.X)
        val_acc = float(np.mean(P_val.argmax(axis=1) == val.y))
        val_loss = float(-np.mean(np.log(P_val[Y_val.astype(bool)] + 1e-300)))
        history.append({"epoch": epoch, "loss": total / len(train),
                        "val_accuracy": val_acc, "val_loss": val_loss})
        log.debug("epoch %d loss %.4f val_acc %.4f", epoch, total / len(train), val_acc)
        # only a strict accuracy gain resets patience; the earliest best epoch wins
        if val_acc > best:
            best, best_epoch, stale = val_acc, epoch, 0
            best_params = [p.copy() for p in params]
        else:
            stale += 1
            if stale >= cfg.patience:
                break

    model = _build(cfg.kind, best_params)
    metrics = {
        "best_epoch": best_epoch,
        "epochs_run": len(history),
        "train": classification_metrics(train.y, model.predict(train.X), C),
        "val": classification_metrics(val.y, model.predict(val.X), C),
        "config": asdict(cfg),
    }
    return model, metrics
