import random

from exitsched.queueing import SystemState


def make_state(waits, now=1_000_000):
    """State whose queue m holds tasks with the given waits (oldest first)."""
    state = SystemState(len(waits), now=0)
    for m, queue in enumerate(waits):
        for w in sorted(queue, reverse=True):
            state.queues[m].push(now - w)
    state.now = now
    return state


def random_waits(rng: random.Random, n_models: int, max_len: int, max_wait: int):
    while True:
        waits = [
            sorted((rng.randint(0, max_wait) for _ in range(rng.randint(0, max_len))), reverse=True)
            for _ in range(n_models)
        ]
        if any(waits):
            return waits


def tiny_table(latency_by_model, accuracy=None, labels=("layer1", "layer2", "layer3", "final")):
    """Hand-written table: ``latency_by_model[m][e]`` is the per-batch row."""
    from exitsched.profile import ExitPoint, ModelProfile, ProfileTable, validate_table

    models = []
    for m, rows in enumerate(latency_by_model):
        labs = labels[len(labels) - len(rows):] if len(rows) < len(labels) else labels
        acc = accuracy[m] if accuracy else tuple(float(10 * (e + 1)) for e in range(len(rows)))
        models.append(
            ModelProfile(
                id=f"M{m}",
                name=f"model{m}",
                exits=tuple(ExitPoint(e, labs[e]) for e in range(len(rows))),
                accuracy_pct=tuple(acc),
                latency_us=tuple(tuple(r) for r in rows),
            )
        )
    table = ProfileTable(tuple(models), len(latency_by_model[0][0]))
    validate_table(table)
    return table
