from collections import OrderedDict
from typing import Any, Dict, List, Optional

from loguru import logger

from .interfaces import CacheStrategyInterface


class LRUCacheStrategy(CacheStrategyInterface):
    """Least-recently-used cache of loaded artifacts."""

    def __init__(self, capacity: int):
        if capacity < 0:
            raise ValueError("cache capacity must be >= 0")
        self.capacity = capacity
        self.cache: "OrderedDict[str, Any]" = OrderedDict()
        self.hits = 0
        self.misses = 0
        self.evictions = 0

    def get(self, key: str) -> Optional[Any]:
        if key in self.cache:
            self.cache.move_to_end(key)
            self.hits += 1
            logger.debug(f"cache hit {key}")
            return self.cache[key]
        self.misses += 1
        logger.debug(f"cache miss {key}")
        return None

    def set(self, key: str, value: Any) -> None:
        if self.capacity == 0:
            return
        if key in self.cache:
            self.cache.move_to_end(key)
        elif len(self.cache) >= self.capacity:
            evicted, _ = self.cache.popitem(last=False)
            self.evictions += 1
            logger.debug(f"cache evict {evicted}")
        self.cache[key] = value

    def delete(self, key: str) -> None:
        self.cache.pop(key, None)

    def clear(self) -> None:
        self.cache.clear()
        self.hits = 0
        self.misses = 0
        self.evictions = 0

    def get_stats(self) -> Dict[str, int]:
        return {
            "hits": self.hits,
            "misses": self.misses,
            "evictions": self.evictions,
            "size": len(self.cache),
            "capacity": self.capacity,
        }

    def keys(self) -> List[str]:
        return list(self.cache.keys())
