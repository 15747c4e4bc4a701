from .base import (
    VARIANTS,
    Classifier,
    LabeledSet,
    ModelSpec,
    TrainedModel,
    fit_model,
    model_from_dict,
)
from .boost import BoostedTrees, train_gboost
from .gp import GPClassifier, train_gp_classifier
from .knn import KNNClassifier, knn_predict
from .linear import GenderClassifier, LogisticModel, train_logistic
from .mlp import MLPClassifier, train_mlp
from .tree import DecisionTree, TreeNode, entropy_bits, train_decision_tree
