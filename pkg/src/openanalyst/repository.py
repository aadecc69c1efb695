"""Client for CKAN-style open-data portals with a replayable fixture mode.

Search goes through the CKAN v3 ``package_search`` action. Downloads are
cached under ``{cache_dir}/{package_id}/{hash}.dat`` with a manifest index;
a second fetch of the same candidate never touches the network. When a
resource URL serves an HTML landing page, the client falls back to
extracting a direct download link (.csv preferred over .tsv).
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from urllib.parse import urlencode, urljoin, urlparse

import requests


class RepositoryError(Exception):
    pass


class PortalUnreachable(RepositoryError):
    pass


class MalformedPortalResponse(RepositoryError):
    pass


class DownloadFailed(RepositoryError):
    """Transient download failure (timeout, 5xx, empty body)."""


class NotTabular(RepositoryError):
    """Persistent failure: the resource is not a delimited table."""


@dataclass(frozen=True)
class SearchRequest:
    terms: tuple[str, ...]
    scope: str | None = None
    rows: int = 10
    format_preference: tuple[str, ...] = ("CSV",)

    def __post_init__(self) -> None:
        if not self.terms:
            raise ValueError("search terms must be non-empty")
        if not 1 <= self.rows <= 100:
            raise ValueError("rows must be in [1, 100]")


@dataclass(frozen=True)
class DatasetCandidate:
    package_id: str
    title: str
    publisher: str = ""
    resource_url: str = ""
    declared_format: str = ""
    notes: str = ""
    landing_url: str = ""

    def __post_init__(self) -> None:
        if not self.package_id:
            raise ValueError("package_id must be non-empty")
        if not (self.resource_url or self.landing_url):
            raise ValueError("candidate needs a resource or landing URL")


@dataclass(frozen=True)
class DatasetHandle:
    candidate: DatasetCandidate
    local_path: Path
    byte_size: int
    content_hash: str
    fetched_at: float


def request_key(url: str, params: dict[str, str]) -> str:
    canonical = f"GET {url}?{urlencode(sorted(params.items()))}"
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:24]


class LiveTransport:
    """HTTP transport against a real portal."""

    def __init__(self, timeout_s: float = 60.0):
        self.timeout_s = timeout_s

    def get(self, url: str, params: dict[str, str] | None = None) -> tuple[int, bytes]:
        try:
            resp = requests.get(url, params=params or {}, timeout=self.timeout_s)
        except requests.Timeout as exc:
            raise DownloadFailed(f"timeout fetching {url}") from exc
        except requests.RequestException as exc:
            raise PortalUnreachable(str(exc)) from exc
        return resp.status_code, resp.content


class RecordedTransport:
    """Replays responses from a directory of ``{request-hash}.json`` files."""

    def __init__(self, fixture_dir: str | Path):
        self.fixture_dir = Path(fixture_dir)
        self.request_count = 0

    def get(self, url: str, params: dict[str, str] | None = None) -> tuple[int, bytes]:
        self.request_count += 1
        key = request_key(url, params or {})
        path = self.fixture_dir / f"{key}.json"
        if not path.exists():
            raise PortalUnreachable(
                f"no recorded response for {url} (key {key}) in {self.fixture_dir}"
            )
        with open(path, encoding="utf-8") as fh:
            record = json.load(fh)
        if "body_b64" in record:
            import base64

            body = base64.b64decode(record["body_b64"])
        else:
            body = record["body"].encode("utf-8")
        return record.get("status", 200), body


def record_fixture(
    fixture_dir: str | Path,
    url: str,
    params: dict[str, str] | None,
    body: str | bytes,
    status: int = 200,
) -> Path:
    """Write a recorded response file for RecordedTransport (test/fixture helper)."""
    fixture_dir = Path(fixture_dir)
    fixture_dir.mkdir(parents=True, exist_ok=True)
    key = request_key(url, params or {})
    record: dict = {"status": status, "url": url}
    if isinstance(body, bytes):
        import base64

        record["body_b64"] = base64.b64encode(body).decode("ascii")
    else:
        record["body"] = body
    path = fixture_dir / f"{key}.json"
    path.write_text(json.dumps(record), encoding="utf-8")
    return path


_LINK_RE = re.compile(
    r"""(?:href|src)\s*=\s*["']([^"']+)["']|(https?://[^\s"'<>]+)""", re.IGNORECASE
)
_EXTENSION_PREFERENCE = (".csv", ".tsv")


def extract_download_link(raw: str, base: str) -> str | None:
    """First absolute URL in document order ending in a preferred extension.

    .csv links win over .tsv regardless of position.
    """
    if not raw:
        raise ValueError("raw body must be non-empty")
    candidates = []
    for match in _LINK_RE.finditer(raw):
        link = match.group(1) or match.group(2)
        if link:
            candidates.append(link)
    for extension in _EXTENSION_PREFERENCE:
        for link in candidates:
            path = urlparse(link).path.lower()
            if path.endswith(extension):
                return urljoin(base, link)
    return None


def _looks_like_html(body: bytes) -> bool:
    head = body[:1024].lstrip().lower()
    return head.startswith((b"<!doctype", b"<html", b"<head", b"<body"))


def _looks_binary(body: bytes) -> bool:
    return b"\x00" in body[:1024]


class PortalClient:
    """CKAN v3 portal client with download caching."""

    def __init__(self, portal_url: str, cache_dir: str | Path, transport=None):
        self.portal_url = portal_url.rstrip("/")
        self.cache_dir = Path(cache_dir)
        self.transport = transport or LiveTransport()
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    # -- search ------------------------------------------------------------

    def search_packages(self, req: SearchRequest) -> list[DatasetCandidate]:
        url = f"{self.portal_url}/api/3/action/package_search"
        query = " ".join(req.terms) + (f" {req.scope}" if req.scope else "")
        status, body = self.transport.get(url, {"q": query, "rows": str(req.rows)})
        if status != 200:
            raise PortalUnreachable(f"portal returned HTTP {status}")
        try:
            payload = json.loads(body.decode("utf-8"))
            results = payload["result"]["results"]
        except (ValueError, KeyError, TypeError) as exc:
            raise MalformedPortalResponse(f"not a CKAN package_search payload: {exc}") from exc

        candidates = []
        for package in results:
            candidate = self._candidate_from_package(package, req.format_preference)
            if candidate is not None:
                candidates.append(candidate)
        # stable sort: portal relevance order within each format-preference rank
        def rank(c: DatasetCandidate) -> int:
            fmt = c.declared_format.upper()
            for i, preferred in enumerate(req.format_preference):
                if fmt == preferred.upper():
                    return i
            return len(req.format_preference)

        candidates.sort(key=rank)
        return candidates

    @staticmethod
    def _candidate_from_package(
        package: dict, format_preference: tuple[str, ...]
    ) -> DatasetCandidate | None:
        resources = package.get("resources") or []
        chosen = None
        chosen_rank = len(format_preference) + 1
        for resource in resources:
            if not resource.get("url"):
                continue
            fmt = (resource.get("format") or "").upper()
            rank = len(format_preference)
            for i, preferred in enumerate(format_preference):
                if fmt == preferred.upper():
                    rank = i
                    break
            if chosen is None or rank < chosen_rank:
                chosen, chosen_rank = resource, rank
        landing = package.get("url") or ""
        if chosen is None and not landing:
            return None
        try:
            return DatasetCandidate(
                package_id=package.get("id") or package.get("name") or "",
                title=package.get("title", ""),
                publisher=(package.get("organization") or {}).get("title", ""),
                resource_url=chosen["url"] if chosen else "",
                declared_format=(chosen.get("format") or "") if chosen else "",
                notes=package.get("notes") or "",
                landing_url=landing,
            )
        except ValueError:
            return None

    # -- fetch + cache -----------------------------------------------------

    def _manifest_path(self) -> Path:
        return self.cache_dir / "manifest.json"

    def _load_manifest(self) -> dict:
        path = self._manifest_path()
        if path.exists():
            with open(path, encoding="utf-8") as fh:
                return json.load(fh)
        return {}

    def _save_manifest(self, manifest: dict) -> None:
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self._manifest_path().write_text(json.dumps(manifest, indent=2), encoding="utf-8")

    def _lock_for(self, key: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(key, threading.Lock())

    def fetch_resource(self, candidate: DatasetCandidate) -> DatasetHandle:
        """Download (or reuse from cache) the candidate's tabular resource."""
        key = hashlib.sha256(
            f"{candidate.package_id}\x00{candidate.resource_url or candidate.landing_url}".encode()
        ).hexdigest()[:24]
        with self._lock_for(key):
            manifest = self._load_manifest()
            entry = manifest.get(key)
            if entry is not None:
                path = Path(entry["path"])
                if path.exists():
                    body = path.read_bytes()
                    digest = hashlib.sha256(body).hexdigest()
                    if digest == entry["content_hash"]:
                        return DatasetHandle(
                            candidate=candidate,
                            local_path=path,
                            byte_size=entry["byte_size"],
                            content_hash=digest,
                            fetched_at=entry["fetched_at"],
                        )

            body = self._download_tabular(candidate)
            digest = hashlib.sha256(body).hexdigest()
            package_dir = self.cache_dir / _safe_name(candidate.package_id)
            package_dir.mkdir(parents=True, exist_ok=True)
            path = package_dir / f"{digest[:16]}.dat"
            path.write_bytes(body)
            fetched_at = time.time()
            manifest[key] = {
                "package_id": candidate.package_id,
                "resource_url": candidate.resource_url or candidate.landing_url,
                "path": str(path),
                "byte_size": len(body),
                "content_hash": digest,
                "fetched_at": fetched_at,
            }
            self._save_manifest(manifest)
            return DatasetHandle(
                candidate=candidate,
                local_path=path,
                byte_size=len(body),
                content_hash=digest,
                fetched_at=fetched_at,
            )

    def _download_tabular(self, candidate: DatasetCandidate) -> bytes:
        url = candidate.resource_url or candidate.landing_url
        body = self._get_ok(url)
        if _looks_binary(body):
            raise NotTabular(f"{url} served binary content")
        if _looks_like_html(body):
            link = extract_download_link(body.decode("utf-8", errors="replace"), url)
            if link is None:
                raise NotTabular(f"{url} served an HTML page with no tabular download link")
            body = self._get_ok(link)
            if _looks_like_html(body) or _looks_binary(body):
                raise NotTabular(f"extracted link {link} did not serve a table")
        return body

    def _get_ok(self, url: str) -> bytes:
        status, body = self.transport.get(url, {})
        if status >= 500:
            raise DownloadFailed(f"{url} returned HTTP {status}")
        if status != 200:
            raise DownloadFailed(f"{url} returned HTTP {status}")
        if not body:
            raise DownloadFailed(f"{url} returned an empty body")
        return body

    def clear_cache(self) -> int:
        """Remove every cached dataset; returns the number of entries dropped."""
        manifest = self._load_manifest()
        count = len(manifest)
        for entry in manifest.values():
            path = Path(entry["path"])
            if path.exists():
                path.unlink()
        if self._manifest_path().exists():
            self._manifest_path().unlink()
        return count


def _safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", name) or "pkg"
