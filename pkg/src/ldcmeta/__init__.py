"""Meta-trained low-dimensional bipolar classifiers.

A numpy library for training tiny fully-binary classifiers across
heterogeneous tasks so that new tasks need only a cheap closed-form update
of the class layer. Ships with a high-dimensional-computing baseline,
random bit-error fault injection, and bit-exact model serialization.
"""

from .adapt import AdaptConfig, AdaptResult, fast_adapt, fast_adapt_baked
from .data import Dataset, load_isolet, load_mnist, rotate_image
from .faults import FaultConfig, inject, robustness_sweep
from .hdc import HdcConfig, HdcModel, hdc_encode, hdc_infer, hdc_init, hdc_retrain, hdc_train
from .losses import backprop_full, hinge_grad_classlayer, hinge_loss
from .meta import MetaConfig, MetaTrainReport, meta_train, supervised_train
from .model import (BakedModel, LdcModel, bake, baked_predict, class_scores,
                    encode_sample, init_model, predict, quantize_feature)
from .numerics import AdamState, adam_step, finite_difference_grad, make_rng
from .serialize import deserialize, deserialize_checkpoint, serialize, serialize_checkpoint
from .tasks import Episode, TaskPool, TaskSpec, make_episode, make_eval_tasks, sample_training_tasks

__version__ = "0.1.0"
