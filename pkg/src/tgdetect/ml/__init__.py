from .cluster import (
    ClusterModel,
    SuspectReport,
    SweepResult,
    cosine_similarity,
    flag_suspects,
    kmeans_fit,
    pairwise_distances,
    silhouette,
    silhouette_samples,
    sweep_k,
)
from .metrics import balanced_accuracy, metrics, stratified_split
from .trees import (
    TUNED_PARAMS,
    ExtraTreesModel,
    ExtraTreesParams,
    extratrees_predict,
    extratrees_train,
)
