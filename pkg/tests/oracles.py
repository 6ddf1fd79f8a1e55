"""Independent reference computations used only by the tests."""
import numpy as np

# 5-state chain, actions 0=left 1=right, deterministic.
# Left at state 0 stays and pays 1.0; right at state 4 stays and pays 1.4.
N_STATES, N_ACTIONS = 5, 2


def chain_step(s, a):
    if a == 0:
        return (0, 1.0) if s == 0 else (s - 1, 0.0)
    return (4, 1.4) if s == 4 else (s + 1, 0.0)


def value_iteration(gamma=0.9, sweeps=2000):
    """Brute-force Bellman optimality sweeps over the whole table."""
    Q = [[0.0] * N_ACTIONS for _ in range(N_STATES)]
    for _ in range(sweeps):
        new = [[0.0] * N_ACTIONS for _ in range(N_STATES)]
        for s in range(N_STATES):
            for a in range(N_ACTIONS):
                s2, r = chain_step(s, a)
                new[s][a] = r + gamma * max(Q[s2])
        Q = new
    policy = [max(range(N_ACTIONS), key=lambda a: (Q[s][a], -a)) for s in range(N_STATES)]
    return Q, policy


def one_hot(s):
    v = np.zeros(N_STATES)
    v[s] = 1.0
    return v


def naive_targets(agent, batch):
    """Loop-by-loop Bellman targets, using the agent's network only for Q-values."""
    q = agent.model.predict(np.stack([t.state for t in batch]))
    q_next = agent.model.predict(np.stack([t.next_state for t in batch]))
    out = []
    for i, tr in enumerate(batch):
        row = [float(x) for x in q[i]]
        if tr.done:
            target = tr.reward
        else:
            best = float(q_next[i][0])
            for x in q_next[i][1:]:
                if float(x) > best:
                    best = float(x)
            target = tr.reward + agent.config.gamma * best
        row[tr.action] = target
        out.append(row)
    return np.array(out)


def adam_by_hand(w, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        w = w - lr * mhat / (vhat ** 0.5 + eps)
    return w
