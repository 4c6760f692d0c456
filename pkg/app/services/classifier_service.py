"""
Classifier Service

A small convolutional classifier with hand-written exact backpropagation:
stride-2 3x3 convolution blocks with ReLU, global average pooling and a linear
head. Images enter as (H, W, 3) in [0, 1] with no normalization layer.

Weight file layout (little endian):
    magic (8 bytes) | spec hash (32) | n_classes u32 | weight count u64 |
    metadata length u32 | metadata JSON | float32 weights | SHA-256 of all preceding bytes (32)
"""

import hashlib
import json
import struct
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.exceptions import (
    ChecksumMismatch,
    DivergedLoss,
    MissingClass,
    ResolutionMismatch,
    SpecMismatch,
)
from app.models.models import ClassifierModel, LabeledView
from app.models.schemas import ClassifierSpec, TrainingConfig
from app.utils import conv_ops
from app.utils.files import atomic_write
from app.utils.logging_config import get_logger

logger = get_logger("classifier_service")

WEIGHTS_MAGIC = b"ADVOBJW1"
_HEADER = struct.Struct("<IQI")
PREDICT_BATCH = 64


class ClassifierService:
    """
    Service for classifier inference, gradients, training and weight files.
    """

    # Layout
    @staticmethod
    def layer_shapes(spec: ClassifierSpec) -> List[Tuple[str, Tuple[int, ...]]]:
        """
        Named parameter shapes in storage order.

        Args:
            spec: Architecture

        Returns:
            List of (name, shape)
        """
        shapes = []
        channels = 3
        for i, block in enumerate(spec.blocks):
            shapes.append((f"conv{i}.weight", (block.width, channels, block.kernel, block.kernel)))
            shapes.append((f"conv{i}.bias", (block.width,)))
            channels = block.width
        shapes.append(("head.weight", (spec.n_classes, channels)))
        shapes.append(("head.bias", (spec.n_classes,)))
        return shapes

    @staticmethod
    def weight_count(spec: ClassifierSpec) -> int:
        return int(sum(np.prod(shape) for _, shape in ClassifierService.layer_shapes(spec)))

    @staticmethod
    def unpack(spec: ClassifierSpec, flat: np.ndarray) -> Dict[str, np.ndarray]:
        """Per-layer views into a flat parameter vector."""
        params = {}
        offset = 0
        for name, shape in ClassifierService.layer_shapes(spec):
            size = int(np.prod(shape))
            params[name] = flat[offset:offset + size].reshape(shape)
            offset += size
        return params

    @staticmethod
    def spec_hash(spec: ClassifierSpec) -> bytes:
        """32-byte SHA-256 of the canonical JSON form of the spec."""
        canonical = json.dumps(spec.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).digest()

    @staticmethod
    def default_classifier_id(model: ClassifierModel) -> str:
        return "clf-" + hashlib.sha256(model.weights.astype("<f4").tobytes()).hexdigest()[:8]

    @staticmethod
    def init_model(spec: ClassifierSpec, seed: int = 0, classifier_id: str = "") -> ClassifierModel:
        """
        He-initialized model; biases start at zero.

        Args:
            spec: Architecture
            seed: Seed
            classifier_id: Identifier used in reports

        Returns:
            ClassifierModel: New model
        """
        rng = np.random.default_rng(seed)
        flat = np.zeros(ClassifierService.weight_count(spec), dtype=np.float32)
        for name, view in ClassifierService.unpack(spec, flat).items():
            if name.endswith(".weight"):
                fan_in = int(np.prod(view.shape[1:]))
                view[...] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=view.shape)
        return ClassifierModel(spec=spec, weights=flat, classifier_id=classifier_id)

    # Inference
    @staticmethod
    def _as_batch(model: ClassifierModel, images: np.ndarray) -> np.ndarray:
        if images.ndim == 3:
            images = images[None]
        res = model.resolution
        if images.shape[1:] != (res, res, 3):
            raise ResolutionMismatch(
                f"Image shape {images.shape[1:]} does not match classifier input ({res}, {res}, 3)",
                expected=res,
            )
        return np.ascontiguousarray(images.transpose(0, 3, 1, 2), dtype=np.float64)

    @staticmethod
    def _forward(model: ClassifierModel, x: np.ndarray, params: Dict[str, np.ndarray]):
        caches = []
        h = x
        for i, block in enumerate(model.spec.blocks):
            pre, cols = conv_ops.conv_forward(
                h, params[f"conv{i}.weight"], params[f"conv{i}.bias"], block.stride, block.kernel // 2
            )
            caches.append((h.shape, cols, pre > 0))
            h = np.maximum(pre, 0.0)
        features = h.mean(axis=(2, 3))
        logits = features @ params["head.weight"].T + params["head.bias"]
        return logits, features, caches, h.shape

    @staticmethod
    def _params64(model: ClassifierModel) -> Dict[str, np.ndarray]:
        return ClassifierService.unpack(model.spec, model.weights.astype(np.float64))

    @staticmethod
    def forward(model: ClassifierModel, image: np.ndarray) -> np.ndarray:
        """
        Logits for one image.

        Args:
            model: Classifier
            image: (H, W, 3) at the model resolution

        Returns:
            np.ndarray: (n_classes,) logits

        Raises:
            ResolutionMismatch: If the image size differs from the model input
        """
        x = ClassifierService._as_batch(model, image)
        logits, _, _, _ = ClassifierService._forward(model, x, ClassifierService._params64(model))
        return logits[0]

    @staticmethod
    def forward_batch(model: ClassifierModel, images: np.ndarray) -> np.ndarray:
        """(N, n_classes) logits for a stack of images, evaluated in chunks."""
        params = ClassifierService._params64(model)
        out = []
        for start in range(0, len(images), PREDICT_BATCH):
            x = ClassifierService._as_batch(model, images[start:start + PREDICT_BATCH])
            out.append(ClassifierService._forward(model, x, params)[0])
        return np.concatenate(out, axis=0) if out else np.zeros((0, model.n_classes))

    @staticmethod
    def predict(model: ClassifierModel, image: np.ndarray) -> int:
        """Argmax class; ties go to the lowest index."""
        return int(np.argmax(ClassifierService.forward(model, image)))

    @staticmethod
    def softmax(logits: np.ndarray) -> np.ndarray:
        shifted = logits - np.max(logits, axis=-1, keepdims=True)
        exp = np.exp(shifted)
        return exp / exp.sum(axis=-1, keepdims=True)

    @staticmethod
    def cross_entropy(logits: np.ndarray, y: int) -> float:
        """-log softmax(logits)[y] with max subtraction."""
        shifted = logits - np.max(logits)
        log_norm = np.log(np.sum(np.exp(shifted)))
        return float(max(log_norm - shifted[y], 0.0))

    # Gradients
    @staticmethod
    def _backward(
        model: ClassifierModel,
        params: Dict[str, np.ndarray],
        d_logits: np.ndarray,
        features: np.ndarray,
        caches,
        last_shape,
        need_input: bool,
        need_params: bool,
    ) -> Tuple[Optional[np.ndarray], Optional[np.ndarray]]:
        grads = {}
        grads["head.weight"] = d_logits.T @ features
        grads["head.bias"] = d_logits.sum(axis=0)
        n, c, h, w = last_shape
        d_h = np.broadcast_to((d_logits @ params["head.weight"])[:, :, None, None] / (h * w), last_shape)

        for i in reversed(range(len(model.spec.blocks))):
            block = model.spec.blocks[i]
            x_shape, cols, active = caches[i]
            d_pre = d_h * active
            d_x, d_w, d_b = conv_ops.conv_backward(
                d_pre,
                cols,
                x_shape,
                params[f"conv{i}.weight"],
                block.stride,
                block.kernel // 2,
                need_input=need_input or i > 0,
            )
            grads[f"conv{i}.weight"] = d_w
            grads[f"conv{i}.bias"] = d_b
            d_h = d_x

        flat = None
        if need_params:
            flat = np.concatenate(
                [grads[name].reshape(-1) for name, _ in ClassifierService.layer_shapes(model.spec)]
            )
        d_input = d_h.transpose(0, 2, 3, 1) if need_input else None
        return d_input, flat

    @staticmethod
    def loss_and_gradients(
        model: ClassifierModel,
        images: np.ndarray,
        labels: Sequence[int],
        need_input: bool = False,
        need_params: bool = True,
    ) -> Tuple[float, Optional[np.ndarray], Optional[np.ndarray]]:
        """
        Mean cross-entropy over a batch and its gradients.

        Args:
            model: Classifier
            images: (N, H, W, 3)
            labels: N class indices
            need_input: Return dLoss/dImages
            need_params: Return dLoss/dWeights (flat, float64)

        Returns:
            Tuple: (loss, input gradient or None, parameter gradient or None)
        """
        params = ClassifierService._params64(model)
        x = ClassifierService._as_batch(model, images)
        logits, features, caches, last_shape = ClassifierService._forward(model, x, params)
        labels = np.asarray(labels, dtype=np.int64)
        n = len(labels)
        probs = ClassifierService.softmax(logits)
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=1))
        loss = float(np.mean(log_norm - shifted[np.arange(n), labels]))

        d_logits = probs.copy()
        d_logits[np.arange(n), labels] -= 1.0
        d_logits /= n
        d_input, d_params = ClassifierService._backward(
            model, params, d_logits, features, caches, last_shape, need_input, need_params
        )
        return loss, d_input, d_params

    @staticmethod
    def grad_input(model: ClassifierModel, image: np.ndarray, y: int) -> np.ndarray:
        """
        Exact dLoss/dImage of the cross-entropy for one image.

        Args:
            model: Classifier
            image: (H, W, 3)
            y: Ground-truth class

        Returns:
            np.ndarray: (H, W, 3) gradient
        """
        _, d_input, _ = ClassifierService.loss_and_gradients(
            model, image[None], [y], need_input=True, need_params=False
        )
        return d_input[0]

    # Training
    @staticmethod
    def accuracy(model: ClassifierModel, views: Sequence[LabeledView]) -> float:
        """Fraction of views predicted correctly."""
        if not views:
            return 0.0
        images = np.stack([view.image for view in views])
        predictions = np.argmax(ClassifierService.forward_batch(model, images), axis=1)
        labels = np.array([view.label for view in views])
        return float(np.mean(predictions == labels))

    @staticmethod
    def train_classifier(
        views: Sequence[LabeledView],
        config: TrainingConfig,
        spec: ClassifierSpec,
        classifier_id: Optional[str] = None,
    ) -> Tuple[ClassifierModel, float]:
        """
        Minibatch SGD with momentum on cross-entropy.

        Single-threaded and bitwise reproducible under a fixed seed.

        Args:
            views: Training corpus
            config: Hyperparameters
            spec: Architecture
            classifier_id: Identifier; derived from the weights when None

        Returns:
            Tuple[ClassifierModel, float]: Trained model and its final accuracy on the corpus

        Raises:
            MissingClass: If a class has no view or a label is out of range
            DivergedLoss: If the loss becomes non-finite
        """
        labels = np.array([view.label for view in views], dtype=np.int64)
        present = set(labels.tolist())
        missing = sorted(set(range(spec.n_classes)) - present)
        if missing or (labels.size and labels.max() >= spec.n_classes):
            raise MissingClass(
                f"Training corpus must cover classes 0..{spec.n_classes - 1}; missing {missing}",
                missing=missing,
            )

        images = np.stack([view.image for view in views]).astype(np.float32)
        model = ClassifierService.init_model(spec, config.seed)
        rng = np.random.default_rng(config.seed + 1)
        velocity = np.zeros(model.weights.shape, dtype=np.float64)
        step = 0
        logger.info(
            f"Training on {len(views)} views, {spec.n_classes} classes, "
            f"{ClassifierService.weight_count(spec)} weights"
        )

        for epoch in range(config.epochs):
            order = rng.permutation(len(views))
            epoch_loss = 0.0
            batches = 0
            for start in range(0, len(order), config.batch_size):
                batch = order[start:start + config.batch_size]
                loss, _, grad = ClassifierService.loss_and_gradients(model, images[batch], labels[batch])
                if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                    raise DivergedLoss(f"Non-finite loss at epoch {epoch}, step {step}", step=step)
                velocity = config.momentum * velocity + grad
                model.weights = (model.weights.astype(np.float64) - config.learning_rate * velocity).astype(
                    np.float32
                )
                epoch_loss += loss
                batches += 1
                step += 1
                if config.max_steps is not None and step >= config.max_steps:
                    break
            logger.info(f"Epoch {epoch + 1}/{config.epochs}: mean loss {epoch_loss / max(batches, 1):.4f}")
            if config.max_steps is not None and step >= config.max_steps:
                break

        model.classifier_id = classifier_id or ClassifierService.default_classifier_id(model)
        accuracy = ClassifierService.accuracy(model, views)
        logger.info(f"Classifier {model.classifier_id}: training accuracy {accuracy:.4f} after {step} steps")
        return model, accuracy

    # Weight files
    @staticmethod
    def to_bytes(model: ClassifierModel) -> bytes:
        metadata = json.dumps(
            {"classifier_id": model.classifier_id, "spec": model.spec.model_dump(mode="json")},
            sort_keys=True,
            separators=(",", ":"),
        ).encode("utf-8")
        weights = np.ascontiguousarray(model.weights, dtype="<f4").tobytes()
        body = (
            WEIGHTS_MAGIC
            + ClassifierService.spec_hash(model.spec)
            + _HEADER.pack(model.n_classes, model.weights.size, len(metadata))
            + metadata
            + weights
        )
        return body + hashlib.sha256(body).digest()

    @staticmethod
    def save_weights(model: ClassifierModel, path: str, force: bool = False) -> None:
        """Write the weight file atomically."""
        atomic_write(path, ClassifierService.to_bytes(model), force)
        logger.info(f"Weights written to {path}")

    @staticmethod
    def from_bytes(data: bytes, spec: Optional[ClassifierSpec] = None) -> ClassifierModel:
        """
        Parse a weight file.

        Args:
            data: File contents
            spec: Expected architecture, or None to trust the embedded one

        Returns:
            ClassifierModel: Loaded model

        Raises:
            ChecksumMismatch: On corruption or truncation
            SpecMismatch: If the file was written for another architecture
        """
        fixed = len(WEIGHTS_MAGIC) + 32 + _HEADER.size
        if len(data) < fixed + 32:
            raise ChecksumMismatch("Weight file is truncated")
        body, checksum = data[:-32], data[-32:]
        if hashlib.sha256(body).digest() != checksum:
            raise ChecksumMismatch("Weight file checksum does not match its contents")
        if body[:len(WEIGHTS_MAGIC)] != WEIGHTS_MAGIC:
            raise ChecksumMismatch("Not a classifier weight file")

        stored_hash = body[len(WEIGHTS_MAGIC):len(WEIGHTS_MAGIC) + 32]
        n_classes, count, meta_len = _HEADER.unpack_from(body, len(WEIGHTS_MAGIC) + 32)
        metadata = json.loads(body[fixed:fixed + meta_len].decode("utf-8"))
        embedded = ClassifierSpec.model_validate(metadata["spec"])
        if ClassifierService.spec_hash(embedded) != stored_hash:
            raise ChecksumMismatch("Embedded spec does not match the stored spec hash")

        if spec is not None and ClassifierService.spec_hash(spec) != stored_hash:
            raise SpecMismatch("Weight file was written for a different classifier spec")
        if count != ClassifierService.weight_count(embedded) or n_classes != embedded.n_classes:
            raise SpecMismatch(
                f"Weight count {count} does not match spec ({ClassifierService.weight_count(embedded)})"
            )
        raw = body[fixed + meta_len:]
        if len(raw) != 4 * count:
            raise ChecksumMismatch("Weight payload has the wrong length")
        weights = np.frombuffer(raw, dtype="<f4").astype(np.float32)
        return ClassifierModel(spec=embedded, weights=weights, classifier_id=metadata.get("classifier_id", ""))

    @staticmethod
    def load_weights(path: str, spec: Optional[ClassifierSpec] = None) -> ClassifierModel:
        """Read a weight file written by save_weights."""
        with open(path, "rb") as handle:
            model = ClassifierService.from_bytes(handle.read(), spec)
        logger.debug(f"Loaded classifier {model.classifier_id} from {path}")
        return model
