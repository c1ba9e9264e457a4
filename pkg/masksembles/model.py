"""
MLP classifiers built from the tensor primitives.

``MasksemblesMLP`` multiplies the activations of every hidden layer by one row
of a fixed mask pool; the same row is used at every layer, so a mask index
selects one sub-network of the shared weights. Training assigns a random mask
to each sample, inference averages the class probabilities of all masks.

The same class without a mask pool is the plain single model. ``Ensemble``
(independent unmasked members) and ``McDropoutMLP`` (fresh random dropout
masks) are the two comparators the mask pool interpolates between.
"""
import logging
import math
from dataclasses import dataclass
from dataclasses import field
from dataclasses import replace
from functools import partial
from typing import List
from typing import Optional
from typing import Sequence

import numpy as np

from masksembles.const import DEFAULT_BATCH_SIZE
from masksembles.const import DEFAULT_EPOCHS
from masksembles.const import DEFAULT_LEARNING_RATE
from masksembles.const import DEFAULT_MOMENTUM
from masksembles.const import STREAM_ASSIGN
from masksembles.const import STREAM_CELL
from masksembles.const import STREAM_INIT
from masksembles.const import STREAM_SHUFFLE
from masksembles.errors import NonFiniteError
from masksembles.errors import TrainingError
from masksembles.errors import ValidationError
from masksembles.errors import require
from masksembles.masks import MaskSet
from masksembles.masks import MaskSpec
from masksembles.masks import generate_bernoulli_masks
from masksembles.masks import generate_masks
from masksembles.masks import round_half_up
from masksembles.masks import solve_m_for_fixed_width
from masksembles.parallel import call_parallel
from masksembles.rng import derive_seed
from masksembles.rng import stream
from masksembles.tensor import ComputationTape
from masksembles.tensor import Tensor
from masksembles.tensor import add
from masksembles.tensor import backward
from masksembles.tensor import mask
from masksembles.tensor import matmul
from masksembles.tensor import relu
from masksembles.tensor import scale
from masksembles.tensor import softmax
from masksembles.tensor import softmax_cross_entropy

logger = logging.getLogger('masksembles')


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = DEFAULT_EPOCHS
    batch_size: int = DEFAULT_BATCH_SIZE
    learning_rate: float = DEFAULT_LEARNING_RATE
    seed: int = 0
    momentum: float = DEFAULT_MOMENTUM

    def __post_init__(self):
        require(self.epochs >= 1, 'epochs must be >= 1 (got %s)', self.epochs)
        require(self.batch_size >= 1, 'batch_size must be >= 1 (got %s)', self.batch_size)
        # 0 is accepted: it freezes the weights
        require(math.isfinite(self.learning_rate) and self.learning_rate >= 0,
                'learning_rate must be >= 0 (got %s)', self.learning_rate)
        require(0.0 <= self.momentum < 1.0, 'momentum must be in [0, 1) (got %s)', self.momentum)


@dataclass
class TrainHistory:
    epoch_losses: List[float] = field(default_factory=list)
    step_losses: List[float] = field(default_factory=list)


@dataclass
class TrainingMasks:
    """Masks for one batch: pool indices (batch-split path) and/or one mask row per sample."""
    indices: Optional[np.ndarray] = None
    rows: Optional[np.ndarray] = None


@dataclass
class PredictionSet:
    per_mask_probs: np.ndarray
    mixture_probs: np.ndarray

    @property
    def labels(self) -> np.ndarray:
        return self.mixture_probs.argmax(axis=1)

    @property
    def member_labels(self) -> np.ndarray:
        return self.per_mask_probs.argmax(axis=2)


class MasksemblesMLP:
    def __init__(self, layer_widths: Sequence[int], mask_set: Optional[MaskSet] = None,
                 seed: int = 0, fixed_width: bool = False):
        layer_widths = [int(width) for width in layer_widths]
        require(len(layer_widths) >= 3, 'need input, at least one hidden and an output width (got %s)',
                layer_widths)
        require(all(width >= 1 for width in layer_widths), 'layer widths must be >= 1 (got %s)', layer_widths)
        if mask_set is not None:
            hidden = layer_widths[1:-1]
            require(all(width == mask_set.k for width in hidden),
                    'hidden widths %s must equal the mask width %d', hidden, mask_set.k)
        self.layer_widths = layer_widths
        self.mask_set = mask_set
        self.seed = seed
        self.fixed_width = fixed_width
        self.weights: List[Tensor] = []
        self.biases: List[Tensor] = []
        self.init_parameters()

    def init_parameters(self) -> None:
        """Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], one random stream per layer."""
        self.weights, self.biases = [], []
        for layer, (fan_in, fan_out) in enumerate(zip(self.layer_widths, self.layer_widths[1:])):
            rng = stream(self.seed, STREAM_INIT, layer)
            bound = 1.0 / math.sqrt(fan_in)
            self.weights.append(Tensor(rng.uniform(-bound, bound, (fan_in, fan_out)),
                                       requires_grad=True, name='W%d' % layer))
            self.biases.append(Tensor(rng.uniform(-bound, bound, fan_out),
                                      requires_grad=True, name='b%d' % layer))

    @property
    def parameters(self) -> List[Tensor]:
        return [param for pair in zip(self.weights, self.biases) for param in pair]

    @property
    def n_members(self) -> int:
        return 1 if self.mask_set is None else self.mask_set.n

    @property
    def hidden_widths(self) -> List[int]:
        return self.layer_widths[1:-1]

    def member_mask(self, index: int) -> Optional[np.ndarray]:
        if self.mask_set is None:
            return None
        return self.mask_set.masks[index]

    def sample_training_masks(self, rng: np.random.Generator, batch_size: int) -> TrainingMasks:
        if self.mask_set is None:
            return TrainingMasks()
        indices = rng.integers(0, self.mask_set.n, size=batch_size)
        return TrainingMasks(indices=indices, rows=self.mask_set.masks[indices])

    def logits(self, x, masks=None) -> Tensor:
        """``masks`` is None, one mask vector or a per-sample mask matrix."""
        hidden = x
        last = len(self.weights) - 1
        for layer, (weight, bias) in enumerate(zip(self.weights, self.biases)):
            hidden = add(matmul(hidden, weight), bias)
            if layer == last:
                break
            hidden = relu(hidden)
            if masks is not None:
                hidden = mask(hidden, masks)
        return hidden

    def forward(self, x, mask_index: int = 0) -> np.ndarray:
        if not 0 <= mask_index < self.n_members:
            raise ValidationError('mask index must be in [0, %d) (got %s)' % (self.n_members, mask_index))
        return softmax(self.logits(x, self.member_mask(mask_index)))

    def __repr__(self):
        spec = self.mask_set.spec if self.mask_set is not None else None
        return '<MasksemblesMLP widths=%s masks=%s>' % (self.layer_widths, spec)


class McDropoutMLP(MasksemblesMLP):
    """
    Dropout comparator: every training sample draws a fresh Bernoulli mask,
    inference averages ``n_samples`` masks drawn once from the seed.
    """

    def __init__(self, layer_widths: Sequence[int], rate: float, n_samples: int, seed: int = 0):
        super().__init__(layer_widths, mask_set=None, seed=seed)
        require(n_samples >= 1, 'n_samples must be >= 1 (got %s)', n_samples)
        width = self.layer_widths[1]
        require(all(w == width for w in self.hidden_widths), 'dropout MLP needs equal hidden widths')
        self.rate = rate
        self.inference_masks = generate_bernoulli_masks(width, n_samples, rate, seed)

    @property
    def n_members(self) -> int:
        return self.inference_masks.shape[0]

    def member_mask(self, index: int) -> Optional[np.ndarray]:
        return self.inference_masks[index]

    def sample_training_masks(self, rng: np.random.Generator, batch_size: int) -> TrainingMasks:
        rows = (rng.random((batch_size, self.layer_widths[1])) >= self.rate).astype(np.float64)
        return TrainingMasks(rows=rows)


class Ensemble:
    """Independently initialised and trained unmasked MLPs."""

    def __init__(self, members: Sequence[MasksemblesMLP]):
        require(len(members) >= 1, 'an ensemble needs at least one member')
        self.members = list(members)

    @property
    def n_members(self) -> int:
        return len(self.members)

    @property
    def layer_widths(self) -> List[int]:
        return self.members[0].layer_widths

    @property
    def parameters(self) -> List[Tensor]:
        return [param for member in self.members for param in member.parameters]

    def forward(self, x, mask_index: int = 0) -> np.ndarray:
        if not 0 <= mask_index < self.n_members:
            raise ValidationError('member index must be in [0, %d) (got %s)' % (self.n_members, mask_index))
        return self.members[mask_index].forward(x, 0)


def build_model(layer_widths: Sequence[int], mask_spec: Optional[MaskSpec],
                fixed_width: bool = False, seed: int = 0) -> MasksemblesMLP:
    """
    Insert a mask pool after every hidden layer.

    Default mode widens (or narrows) every hidden layer to the trimmed mask
    width K, so ``layer_widths`` only contributes the input/output widths and
    the number of hidden layers. Fixed-width mode keeps the given hidden width
    and solves M from it; the pool is then left untrimmed.
    """
    layer_widths = list(layer_widths)
    require(len(layer_widths) >= 3, 'need at least one hidden layer (got widths %s)', layer_widths)
    if mask_spec is None:
        return MasksemblesMLP(layer_widths, None, seed)

    hidden = layer_widths[1:-1]
    if fixed_width:
        require(len(set(hidden)) == 1, 'fixed-width mode needs equal hidden widths (got %s)', hidden)
        solved = solve_m_for_fixed_width(hidden[0], mask_spec.n, mask_spec.s, mask_spec.seed)
        mask_set = generate_masks(solved, trim=False)
    else:
        mask_set = generate_masks(mask_spec, trim=True)
    widths = [layer_widths[0]] + [mask_set.k] * len(hidden) + [layer_widths[-1]]
    logger.info('Building model widths=%s masks=%s fixed_width=%s', widths, mask_set.spec, fixed_width)
    return MasksemblesMLP(widths, mask_set, seed, fixed_width)


def build_single_model(layer_widths: Sequence[int], seed: int = 0) -> MasksemblesMLP:
    return MasksemblesMLP(layer_widths, None, seed)


def build_ensemble(layer_widths: Sequence[int], n: int, seed: int = 0) -> Ensemble:
    return Ensemble([MasksemblesMLP(layer_widths, None, derive_seed(seed, STREAM_INIT, index))
                     for index in range(n)])


def build_dropout_model(layer_widths: Sequence[int], m: int, s: float, n_samples: int,
                        seed: int = 0) -> McDropoutMLP:
    """Dropout MLP with the same pre-trim width M*S and drop rate 1 - 1/S as a mask pool."""
    width = round_half_up(m * s)
    widths = [layer_widths[0]] + [width] * (len(layer_widths) - 2) + [layer_widths[-1]]
    return McDropoutMLP(widths, 1.0 - 1.0 / s, n_samples, seed)


def batch_loss(model: MasksemblesMLP, x: np.ndarray, y: np.ndarray, masks: TrainingMasks,
               batch_split: bool = True):
    """
    Mean cross-entropy of each sample under its own mask. With ``batch_split``
    the batch is grouped into one sub-batch per pool index; the result is the
    same as masking sample by sample.
    """
    if masks.indices is not None and batch_split:
        total = None
        for index in range(model.n_members):
            selected = masks.indices == index
            if not selected.any():
                continue
            part, _ = softmax_cross_entropy(model.logits(x[selected], model.member_mask(index)),
                                            y[selected], reduction='sum')
            total = part if total is None else add(total, part)
        return scale(total, 1.0 / y.shape[0])
    loss, _ = softmax_cross_entropy(model.logits(x, masks.rows), y)
    return loss


def _train_single(model: MasksemblesMLP, features: np.ndarray, labels: np.ndarray,
                  config: TrainConfig, batch_split: bool) -> TrainHistory:
    history = TrainHistory()
    params = model.parameters
    velocity = [np.zeros_like(param.data) for param in params]
    shuffle_rng = stream(config.seed, STREAM_SHUFFLE)
    assign_rng = stream(config.seed, STREAM_ASSIGN)
    count = labels.shape[0]

    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(count)
        epoch_total = 0.0
        try:
            for start in range(0, count, config.batch_size):
                batch = order[start:start + config.batch_size]
                masks = model.sample_training_masks(assign_rng, batch.shape[0])
                with ComputationTape() as tape:
                    loss = batch_loss(model, features[batch], labels[batch], masks, batch_split)
                grads = backward(tape, loss, params)
                for param, grad, moment in zip(params, grads, velocity):
                    moment *= config.momentum
                    moment += grad
                    param.data -= config.learning_rate * moment
                history.step_losses.append(loss.item())
                epoch_total += loss.item() * batch.shape[0]
        except NonFiniteError as e:
            raise TrainingError('training diverged: %s' % e, epoch) from e
        epoch_loss = epoch_total / count
        if not math.isfinite(epoch_loss):
            raise TrainingError('training diverged: loss %s' % epoch_loss, epoch)
        history.epoch_losses.append(epoch_loss)
        logger.debug('epoch %d loss %.6f', epoch, epoch_loss)
    return history


def train(model, dataset, config: TrainConfig, batch_split: bool = True):
    """
    Minibatch SGD with momentum on cross-entropy. Each epoch reshuffles the
    data; each sample gets a uniformly random mask of the pool. Ensemble
    members are trained one after the other, each with its own derived seed.
    Returns the (in-place) trained model and its loss history.
    """
    require(dataset.labels is not None and dataset.labels.shape[0] >= 1, 'training needs a nonempty labelled dataset')
    features = np.asarray(dataset.features, dtype=np.float64)
    labels = np.asarray(dataset.labels)
    logger.info('Training %r on %d samples: %s', model, labels.shape[0], config)

    if isinstance(model, Ensemble):
        history = TrainHistory()
        for index, member in enumerate(model.members):
            member_config = replace(config, seed=derive_seed(config.seed, STREAM_CELL, index))
            member_history = _train_single(member, features, labels, member_config, batch_split)
            history.step_losses.extend(member_history.step_losses)
            if not history.epoch_losses:
                history.epoch_losses = list(member_history.epoch_losses)
            else:
                history.epoch_losses = [a + b for a, b in zip(history.epoch_losses, member_history.epoch_losses)]
        history.epoch_losses = [loss / model.n_members for loss in history.epoch_losses]
        return model, history

    return model, _train_single(model, features, labels, config, batch_split)


def predict_ensemble(model, x, workers: int = 1) -> PredictionSet:
    """One forward pass per mask (or member); the mixture is their plain average."""
    x = np.asarray(x, dtype=np.float64)
    passes = call_parallel([partial(model.forward, x, index) for index in range(model.n_members)],
                           max_workers=workers)
    per_mask = np.stack(passes)
    total = np.zeros_like(per_mask[0])
    for probs in per_mask:
        total = total + probs
    return PredictionSet(per_mask_probs=per_mask, mixture_probs=total / per_mask.shape[0])


def model_size(model) -> int:
    return int(sum(param.size for param in model.parameters))


def member_predictions(model, x, workers: int = 1) -> np.ndarray:
    """Hard labels of every mask (or member), shape ``N x B``."""
    return predict_ensemble(model, x, workers).member_labels
