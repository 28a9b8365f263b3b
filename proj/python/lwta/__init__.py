"""Stochastic local winner-takes-all networks (C++ core)."""

from ._lwta import (  # noqa: F401
    ContractError,
    Dataset,
    DimensionError,
    FormatError,
    LwtaError,
    ModelIoError,
    Network,
    ParameterError,
    __version__,
    build_network,
    deserialize_model,
    evaluate,
    fgsm,
    forward,
    gumbel_softmax,
    load_cifar10_file,
    load_idx,
    load_model,
    pgd,
    predict,
    reshape_images,
    save_model,
    serialize_model,
    synth_blobs,
    train,
    write_idx,
)
