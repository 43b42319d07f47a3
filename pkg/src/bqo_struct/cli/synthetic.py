"""Seeded synthetic corpora, written in the same text formats the readers accept."""

from typing import List, TextIO, Tuple

import numpy as np

WORDS_PER_LABEL = 12


def generate_chain(
    sequences: int,
    length: int,
    labels: int,
    seed: int,
    noise: float = 0.1,
) -> List[List[Tuple[str, str]]]:
    """
    Generate tagged sequences from a random first-order label chain.

    Each label owns a pool of words and emits one of them; with probability ``noise`` a token
    is drawn from the whole vocabulary instead, so the data is separable only up to noise.

    Returns:
        Sequences of (token, tag) pairs
    """
    if sequences < 0 or length < 1 or labels < 1:
        raise ValueError("sequences >= 0, length >= 1 and labels >= 1 are required")
    rng = np.random.default_rng(seed)
    # sticky transitions so that neighbouring labels carry information
    transitions = rng.dirichlet(np.full(labels, 0.5), size=labels) + 2.0 * np.eye(labels)
    transitions /= transitions.sum(axis=1, keepdims=True)
    start = rng.dirichlet(np.ones(labels))
    vocabulary = labels * WORDS_PER_LABEL

    corpus = []
    for _ in range(sequences):
        tag = int(rng.choice(labels, p=start))
        sequence = []
        for _ in range(length):
            if rng.random() < noise:
                word = int(rng.integers(vocabulary))
            else:
                word = tag * WORDS_PER_LABEL + int(rng.integers(WORDS_PER_LABEL))
            token = f"w{word}" if word % 5 else f"W{word}"
            sequence.append((token, f"T{tag}"))
            tag = int(rng.choice(labels, p=transitions[tag]))
        corpus.append(sequence)
    return corpus


def generate_multiclass(
    instances: int,
    features: int,
    labels: int,
    seed: int,
    active: int = 8,
    noise: float = 0.1,
) -> List[Tuple[int, List[Tuple[int, float]]]]:
    """
    Generate sparse multiclass instances around random class prototypes.

    Every class prefers a random subset of the feature space; an instance activates ``active``
    features, each taken from its class subset with probability 1 - noise.

    Returns:
        (label, sorted (index, value) pairs) per instance
    """
    if instances < 0 or features < 1 or labels < 1:
        raise ValueError("instances >= 0, features >= 1 and labels >= 1 are required")
    rng = np.random.default_rng(seed)
    preferred = max(1, features // labels)
    pools = [
        rng.choice(features, size=min(preferred, features), replace=False) for _ in range(labels)
    ]

    corpus = []
    for _ in range(instances):
        label = int(rng.integers(labels))
        chosen = {}
        for _ in range(active):
            if rng.random() < noise:
                index = int(rng.integers(features))
            else:
                index = int(rng.choice(pools[label]))
            chosen[index] = round(float(rng.uniform(0.5, 1.5)), 4)
        corpus.append((label, sorted(chosen.items())))
    return corpus


def write_chain(handle: TextIO, corpus: List[List[Tuple[str, str]]]) -> None:
    for sequence in corpus:
        for token, tag in sequence:
            handle.write(f"{token}\t{tag}\n")
        handle.write("\n")


def write_multiclass(handle: TextIO, corpus: List[Tuple[int, List[Tuple[int, float]]]]) -> None:
    for label, pairs in corpus:
        items = " ".join(f"{index}:{value!r}" for index, value in pairs)
        handle.write(f"{label} {items}".rstrip() + "\n")
