"""Scikit-learn estimator wrapping the full training procedure.

>>> from mmdl import MMDLEmbedder
>>> model = MMDLEmbedder(epochs=5).fit(X, identities, domains=tags)  # doctest: +SKIP
>>> Z = model.transform(X_new)  # doctest: +SKIP
"""

from __future__ import annotations

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .evalkit import EvalProtocol, embed, evaluate
from .synthdata import Dataset
from .training import TrainConfig, run_training
from .validation import check_domains, check_features, check_identities


class MMDLEmbedder(TransformerMixin, BaseEstimator):
    """Cross-domain embedding model trained with the multi-margin loss.

    ``fit`` takes features, identity labels, and a per-sample domain tag
    (``"NIR"``/``"VIS"``); ``transform`` maps features of either domain into
    the shared decorrelated embedding space, compared by cosine similarity.

    Parameters mirror :class:`mmdl.training.TrainConfig`; ``hidden_sizes``
    and ``n_components`` define the encoder widths and ``q`` the output
    dimension of the decorrelation layer (``None`` keeps all of them).
    """

    def __init__(
        self,
        hidden_sizes=(128, 128),
        n_components=64,
        q=None,
        batch_size=16,
        epochs=50,
        lr_initial=0.003,
        lr_final=3e-5,
        pretrain_epochs=20,
        pretrain_lr=0.05,
        alpha1=0.2,
        alpha2=0.2,
        lambda1=10.0,
        lambda2=1.0,
        scale=16.0,
        margin_nir=0.9,
        margin_vis=0.9,
        lambda_nir=0.6,
        lambda_vis=0.4,
        use_decorr=True,
        use_qml=True,
        use_haml=True,
        random_state=0,
    ):
        self.hidden_sizes = hidden_sizes
        self.n_components = n_components
        self.q = q
        self.batch_size = batch_size
        self.epochs = epochs
        self.lr_initial = lr_initial
        self.lr_final = lr_final
        self.pretrain_epochs = pretrain_epochs
        self.pretrain_lr = pretrain_lr
        self.alpha1 = alpha1
        self.alpha2 = alpha2
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.scale = scale
        self.margin_nir = margin_nir
        self.margin_vis = margin_vis
        self.lambda_nir = lambda_nir
        self.lambda_vis = lambda_vis
        self.use_decorr = use_decorr
        self.use_qml = use_qml
        self.use_haml = use_haml
        self.random_state = random_state

    def _config(self, n_features):
        q = self.n_components if self.q is None else self.q
        return TrainConfig(
            layer_sizes=(n_features, *self.hidden_sizes, self.n_components),
            q=q,
            batch_size=self.batch_size,
            epochs=self.epochs,
            lr_initial=self.lr_initial,
            lr_final=self.lr_final,
            pretrain_epochs=self.pretrain_epochs,
            pretrain_lr=self.pretrain_lr,
            alpha1=self.alpha1,
            alpha2=self.alpha2,
            lambda1=self.lambda1,
            lambda2=self.lambda2,
            scale=self.scale,
            margin_nir=self.margin_nir,
            margin_vis=self.margin_vis,
            lambda_nir=self.lambda_nir,
            lambda_vis=self.lambda_vis,
            seed=self.random_state,
            use_decorr=self.use_decorr,
            use_qml=self.use_qml,
            use_haml=self.use_haml,
            baseline_softmax=not self.use_haml,
        )

    def fit(self, X, y, domains=None):
        X = check_features(X)
        y = check_identities(y, X.shape[0])
        d = check_domains(domains, X.shape[0])
        cfg = self._config(X.shape[1])
        result = run_training(cfg, Dataset(X, y, d))
        self.params_ = result.params
        self.layer_ = result.layer
        self.head_ = result.head
        self.training_log_ = result.log
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        X = check_features(X, self.n_features_in_)
        return embed(self.params_, self.layer_, X)

    def evaluate(self, X, y, domains, protocol=EvalProtocol()):
        """Full report with NIR samples as probes and VIS samples as gallery."""
        check_is_fitted(self, "params_")
        X = check_features(X, self.n_features_in_)
        y = check_identities(y, X.shape[0])
        d = check_domains(domains, X.shape[0])
        return evaluate(self.params_, self.layer_, Dataset(X, y, d), protocol)

    def score(self, X, y, domains=None):
        """Rank-1 identification accuracy of NIR probes against the VIS gallery."""
        return self.evaluate(X, y, domains).rank1

