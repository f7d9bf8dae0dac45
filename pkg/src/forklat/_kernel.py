"""Compiled event loop for the (n, r_f, r, k) fork-join simulator.

The loop never draws random numbers itself: it consumes pre-drawn pools of
arrival times, service times and uniforms in a fixed order, which keeps a run
bit-for-bit reproducible from its seed.

Event order at equal timestamps: task finishes (by job id, then server),
then arrivals, then service starts. Cancellation is instantaneous, so a task
cancelled at the instant it would have started contributes nothing.
"""

import numpy as np
from numba import njit

GROUP_RANDOM = 0
UNIFORM_RANDOM = 1
ROUND_ROBIN = 2

QUEUED = 0
IN_SERVICE = 1
DONE = 2
CANCELLED = 3


@njit(cache=True, inline="always")
def _before(h_time, h_task, task_server, r_f, a, b):
    ta = h_time[a]
    tb = h_time[b]
    if ta != tb:
        return ta < tb
    ja = h_task[a] // r_f
    jb = h_task[b] // r_f
    if ja != jb:
        return ja < jb
    return task_server[h_task[a]] < task_server[h_task[b]]


@njit(cache=True)
def _heap_push(h_time, h_task, size, t, task, task_server, r_f):
    i = size
    h_time[i] = t
    h_task[i] = task
    while i > 0:
        p = (i - 1) >> 1
        if _before(h_time, h_task, task_server, r_f, i, p):
            h_time[i], h_time[p] = h_time[p], h_time[i]
            h_task[i], h_task[p] = h_task[p], h_task[i]
            i = p
        else:
            break
    return size + 1


@njit(cache=True)
def _heap_pop(h_time, h_task, size, task_server, r_f):
    size -= 1
    h_time[0] = h_time[size]
    h_task[0] = h_task[size]
    i = 0
    while True:
        left = 2 * i + 1
        if left >= size:
            break
        c = left
        right = left + 1
        if right < size and _before(h_time, h_task, task_server, r_f, right, left):
            c = right
        if _before(h_time, h_task, task_server, r_f, c, i):
            h_time[i], h_time[c] = h_time[c], h_time[i]
            h_task[i], h_task[c] = h_task[c], h_task[i]
            i = c
        else:
            break
    return size


@njit(cache=True)
def simulate_kernel(n, r_f, r, k, policy, arrivals, zero_load, services, uniforms,
                    job_arrival, job_finish, job_cost, job_started, job_finished,
                    job_attributed, task_server, task_start, task_end,
                    srv_busy, srv_assigned):
    num_jobs = job_arrival.shape[0]
    inf = np.inf

    task_state = np.full(num_jobs * r_f, QUEUED, dtype=np.int8)
    queue = np.empty((n, num_jobs + 1), dtype=np.int64)
    q_head = np.zeros(n, dtype=np.int64)
    q_tail = np.zeros(n, dtype=np.int64)
    srv_cur = np.full(n, -1, dtype=np.int64)
    srv_start = np.zeros(n)
    perm = np.arange(n)

    heap_cap = num_jobs * r + n + 1
    h_time = np.empty(heap_cap)
    h_task = np.empty(heap_cap, dtype=np.int64)
    h_size = 0

    cand_srv = np.empty(n, dtype=np.int64)
    cand_task = np.empty(n, dtype=np.int64)

    sp = 0  # service pool cursor
    up = 0  # uniform pool cursor
    n_up = uniforms.shape[0]
    rr = 0
    next_job = 0
    departed = 0
    in_system = 0
    now = 0.0
    next_arr = 0.0 if zero_load else arrivals[0]

    while departed < num_jobs:
        while h_size > 0 and task_state[h_task[0]] != IN_SERVICE:
            h_size = _heap_pop(h_time, h_task, h_size, task_server, r_f)
        t_f = h_time[0] if h_size > 0 else inf
        t_a = next_arr if next_job < num_jobs else inf
        now = t_f if t_f <= t_a else t_a
        if now == inf:
            break

        # task finishes
        while h_size > 0:
            top = h_task[0]
            if task_state[top] != IN_SERVICE:
                h_size = _heap_pop(h_time, h_task, h_size, task_server, r_f)
                continue
            if h_time[0] != now:
                break
            h_size = _heap_pop(h_time, h_task, h_size, task_server, r_f)
            s = task_server[top]
            j = top // r_f
            task_state[top] = DONE
            task_end[top] = now
            job_cost[j] += now - task_start[top]
            job_attributed[j] += now - srv_start[s]
            srv_busy[s] += now - srv_start[s]
            srv_cur[s] = -1
            job_finished[j] += 1
            if job_finished[j] == k:
                job_finish[j] = now
                departed += 1
                in_system -= 1
                base = j * r_f
                for t in range(base, base + r_f):
                    st = task_state[t]
                    if st == QUEUED:
                        task_state[t] = CANCELLED
                    elif st == IN_SERVICE:
                        task_state[t] = CANCELLED
                        s2 = task_server[t]
                        task_end[t] = now
                        job_cost[j] += now - task_start[t]
                        job_attributed[j] += now - srv_start[s2]
                        srv_busy[s2] += now - srv_start[s2]
                        srv_cur[s2] = -1
                if zero_load and in_system == 0 and next_job < num_jobs:
                    next_arr = now

        # arrivals
        while next_job < num_jobs and next_arr == now:
            j = next_job
            next_job += 1
            in_system += 1
            job_arrival[j] = now
            base = j * r_f
            if policy == GROUP_RANDOM:
                groups = n // r_f
                g = int(uniforms[up % n_up] * groups)
                up += 1
                if g >= groups:
                    g = groups - 1
                for i in range(r_f):
                    task_server[base + i] = g * r_f + i
            elif policy == UNIFORM_RANDOM:
                for i in range(r_f):
                    idx = i + int(uniforms[up % n_up] * (n - i))
                    up += 1
                    if idx >= n:
                        idx = n - 1
                    tmp = perm[i]
                    perm[i] = perm[idx]
                    perm[idx] = tmp
                    task_server[base + i] = perm[i]
            else:
                for i in range(r_f):
                    task_server[base + i] = (rr + i) % n
                rr = (rr + r_f) % n
            for i in range(r_f):
                s = task_server[base + i]
                queue[s, q_tail[s]] = base + i
                q_tail[s] += 1
                srv_assigned[s] += 1
            if zero_load:
                next_arr = inf
            elif next_job < num_jobs:
                next_arr = arrivals[next_job]

        # service starts, repeated until no idle server has a live head task
        while True:
            ncand = 0
            for s in range(n):
                if srv_cur[s] != -1:
                    continue
                h = q_head[s]
                while h < q_tail[s] and task_state[queue[s, h]] != QUEUED:
                    h += 1
                q_head[s] = h
                if h < q_tail[s]:
                    cand_srv[ncand] = s
                    cand_task[ncand] = queue[s, h]
                    ncand += 1
            if ncand == 0:
                break
            # order candidates by (job, server)
            for a in range(1, ncand):
                ts = cand_task[a]
                ss = cand_srv[a]
                b = a - 1
                while b >= 0 and (cand_task[b] // r_f > ts // r_f or
                                  (cand_task[b] // r_f == ts // r_f and cand_srv[b] > ss)):
                    cand_task[b + 1] = cand_task[b]
                    cand_srv[b + 1] = cand_srv[b]
                    b -= 1
                cand_task[b + 1] = ts
                cand_srv[b + 1] = ss
            i = 0
            while i < ncand:
                j = cand_task[i] // r_f
                e = i + 1
                while e < ncand and cand_task[e] // r_f == j:
                    e += 1
                cnt = e - i
                allowed = r - job_started[j]
                if cnt > allowed:
                    # retain `allowed` of the simultaneous starters uniformly at random
                    for a in range(allowed):
                        idx = a + int(uniforms[up % n_up] * (cnt - a))
                        up += 1
                        if idx >= cnt:
                            idx = cnt - 1
                        tt = cand_task[i + a]
                        cand_task[i + a] = cand_task[i + idx]
                        cand_task[i + idx] = tt
                        tt = cand_srv[i + a]
                        cand_srv[i + a] = cand_srv[i + idx]
                        cand_srv[i + idx] = tt
                    cnt = allowed
                for a in range(i, i + cnt):
                    t = cand_task[a]
                    s = cand_srv[a]
                    q_head[s] += 1
                    task_state[t] = IN_SERVICE
                    task_start[t] = now
                    srv_cur[s] = t
                    srv_start[s] = now
                    dur = services[sp]
                    sp += 1
                    h_size = _heap_push(h_time, h_task, h_size, now + dur, t, task_server, r_f)
                    job_started[j] += 1
                if job_started[j] >= r:
                    base = j * r_f
                    for t in range(base, base + r_f):
                        if task_state[t] == QUEUED:
                            task_state[t] = CANCELLED
                i = e
    return now
