"""scikit-learn style wrappers: an operator transformer and a node classifier."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .cliques import enumerate_cliques
from .graph import Graph
from .model import TrainConfig, forward, init_model, train
from .operators import build_operators
from .ppr import PushParams
from .validation import check_features, check_labels, check_mask, check_operators


class HiPPRTransformer(TransformerMixin, BaseEstimator):
    """Turn a :class:`Graph` into its normalized HiPPR operators, one per order.

    ``fit`` lifts the graph and solves PPR for every order; ``transform``
    returns the list of operators for the graph that was fitted.
    """

    def __init__(self, max_order=2, alpha=0.15, lambda_=1e-6, omega=1.4, epsilon=None,
                 drop_tol=1e-10, solver="push", variant="hippr", binarize=False, workers=1):
        self.max_order = max_order
        self.alpha = alpha
        self.lambda_ = lambda_
        self.omega = omega
        self.epsilon = epsilon
        self.drop_tol = drop_tol
        self.solver = solver
        self.variant = variant
        self.binarize = binarize
        self.workers = workers

    def fit(self, graph, y=None):
        if not isinstance(graph, Graph):
            raise TypeError("HiPPRTransformer.fit expects a Graph")
        params = PushParams(alpha=self.alpha, lambda_=self.lambda_, omega=self.omega,
                            epsilon=self.epsilon, drop_tol=self.drop_tol)
        self.complex_ = enumerate_cliques(graph, self.max_order) if self.variant == "hippr" else None
        self.operators_, self.ppr_matrices_ = build_operators(
            graph, self.max_order, params, variant=self.variant, solver=self.solver,
            workers=self.workers, binarize=self.binarize, complex_=self.complex_,
        )
        self.fingerprint_ = graph.fingerprint()
        self.n_nodes_ = graph.n
        return self

    def transform(self, graph):
        check_is_fitted(self, "operators_")
        if graph.fingerprint() != self.fingerprint_:
            raise ValueError("transform() got a different graph than fit(); refit first")
        return list(self.operators_)


class HPGNNClassifier(ClassifierMixin, BaseEstimator):
    """Transductive node classifier over precomputed per-order operators.

    ``fit(X, y, operators=...)`` takes features and labels for every node;
    labels below zero mark unlabeled nodes. Without explicit masks the model
    trains on all labeled nodes and selects epochs on the same set.
    """

    def __init__(self, max_order=2, hops=10, alpha=0.15, hidden=64, dropout=0.0, lr=0.05,
                 weight_decay=0.001, optimizer="sgd", momentum=0.9, max_epochs=1000,
                 patience=200, random_state=None):
        self.max_order = max_order
        self.hops = hops
        self.alpha = alpha
        self.hidden = hidden
        self.dropout = dropout
        self.lr = lr
        self.weight_decay = weight_decay
        self.optimizer = optimizer
        self.momentum = momentum
        self.max_epochs = max_epochs
        self.patience = patience
        self.random_state = random_state

    def fit(self, X, y, *, operators, train_mask=None, val_mask=None):
        X = check_features(X)
        n = X.shape[0]
        y = check_labels(y, n)
        ops = check_operators(operators, n, self.max_order)
        labeled = y >= 0
        train_mask = labeled if train_mask is None else check_mask(train_mask, n, "train_mask")
        val_mask = train_mask if val_mask is None else check_mask(val_mask, n, "val_mask")
        self.classes_ = np.unique(y[labeled])
        codes = np.zeros(n, dtype=np.int64)
        codes[labeled] = np.searchsorted(self.classes_, y[labeled])
        seed = 0 if self.random_state is None else int(self.random_state)
        model = init_model(self.max_order, self.hops, X.shape[1], self.classes_.size, self.hidden,
                           alpha=self.alpha, dropout=self.dropout, seed=seed)
        cfg = TrainConfig(lr=self.lr, weight_decay=self.weight_decay, optimizer=self.optimizer,
                          momentum=self.momentum, max_epochs=self.max_epochs,
                          patience=self.patience, seed=seed)
        self.model_, self.history_ = train(model, X, ops, codes, train_mask & labeled,
                                           val_mask & labeled, None, cfg)
        self.operators_ = ops
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X, operators=None):
        check_is_fitted(self, "model_")
        X = check_features(X)
        ops = self.operators_ if operators is None else check_operators(operators, X.shape[0])
        return forward(self.model_, X, ops)

    def predict_proba(self, X, operators=None):
        z = self.decision_function(X, operators)
        z = np.exp(z - z.max(axis=1, keepdims=True))
        return z / z.sum(axis=1, keepdims=True)

    def predict(self, X, operators=None):
        scores = self.decision_function(X, operators)
        return self.classes_[np.argmax(scores, axis=1)]
