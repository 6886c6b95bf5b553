"""
Parallel episode evaluation.
Episodes run on a thread pool; each derives its seed from the run seed and
its (scene, repeat) index, so scheduling never changes results.
"""

import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from pathlib import Path

from tqdm import tqdm

from control import write_trace
from episode_runner import run_episode
from rng import derive_seed

logger = logging.getLogger(__name__)

results_lock = threading.Lock()  # For thread-safe stats updates


def episode_seed(run_seed, scene_index, repeat=0):
    return derive_seed(run_seed, scene_index, repeat)


class EvalStats:
    """Running success statistics, printed every `interval` seconds"""

    def __init__(self, total, interval=5.0, label=""):
        self.total = total
        self.interval = interval
        self.label = label
        self.done = 0
        self.successes = 0
        self.collisions = 0
        self.start_time = time.time()
        self.last_stats_time = self.start_time

    def add(self, result):
        with results_lock:
            self.done += 1
            self.successes += int(result.success)
            self.collisions += result.nav_collisions

    def time_estimate(self, now):
        if self.done == 0 or self.done >= self.total:
            return ""
        elapsed = now - self.start_time
        remaining = elapsed / (self.done / self.total) - elapsed
        minutes, seconds = divmod(int(remaining), 60)
        if minutes > 0:
            return f"Estimated time remaining: {minutes}m {seconds}s"
        return f"Estimated time remaining: {seconds}s"

    def print_stats(self, force=False):
        now = time.time()
        if not force and now - self.last_stats_time < self.interval:
            return
        self.last_stats_time = now
        with results_lock:
            sr = self.successes / self.done if self.done else 0.0
            logger.info(
                "%s%d/%d episodes, SR %.1f%%, %d navigation collisions. %s",
                f"[{self.label}] " if self.label else "",
                self.done,
                self.total,
                100.0 * sr,
                self.collisions,
                self.time_estimate(now),
            )


def run_episodes(
    scenes,
    agent,
    seed,
    workers=1,
    repeats=1,
    progress=False,
    stats_interval=5.0,
    traces_dir=None,
    label="",
):
    """
    Evaluate agent on every scene `repeats` times.

    Returns results sorted by (scene id, seed). A failing episode is reported
    with its scene id; the first failure is re-raised after the pool drains.
    """
    jobs = [(scene, episode_seed(seed, i, r)) for i, scene in enumerate(scenes) for r in range(repeats)]
    stats = EvalStats(len(jobs), stats_interval, label)
    results = []
    errors = []

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = {pool.submit(run_episode, scene, agent, s): (scene.id, s) for scene, s in jobs}
        with tqdm(total=len(jobs), desc=label or "Episodes", disable=not progress) as bar:
            for future in as_completed(futures):
                scene_id, s = futures[future]
                try:
                    result = future.result()
                except Exception as e:
                    logger.error("Error running episode %s (seed %d): %s", scene_id, s, e)
                    errors.append(e)
                else:
                    results.append(result)
                    stats.add(result)
                bar.update(1)
                stats.print_stats()

    if errors:
        raise errors[0]
    stats.print_stats(force=True)

    results.sort(key=lambda r: (r.scene_id, r.seed))
    if traces_dir is not None:
        for result in results:
            write_trace(result.actions, Path(traces_dir) / f"{result.scene_id}-{result.seed}.trace")
    return results
