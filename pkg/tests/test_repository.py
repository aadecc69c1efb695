import threading

import pytest

from openanalyst.repository import (
    DatasetCandidate,
    DownloadFailed,
    MalformedPortalResponse,
    NotTabular,
    PortalClient,
    PortalUnreachable,
    RecordedTransport,
    SearchRequest,
    extract_download_link,
    record_fixture,
    request_key,
)

from conftest import (
    HYPERTENSION_CSV,
    PORTAL_URL,
    RESOURCE_URL,
    ckan_payload,
    make_package,
    record_download,
    record_search,
)


def client(fixture_dir, tmp_path):
    return PortalClient(
        PORTAL_URL, tmp_path / "cache", transport=RecordedTransport(fixture_dir)
    )


def candidate(url=RESOURCE_URL, package_id="hyp-001", landing=""):
    return DatasetCandidate(
        package_id=package_id, title="t", resource_url=url, landing_url=landing
    )


def test_request_key_is_stable_and_order_insensitive():
    a = request_key("https://x/api", {"q": "a", "rows": "10"})
    b = request_key("https://x/api", {"rows": "10", "q": "a"})
    assert a == b
    assert len(a) == 24
    assert a != request_key("https://x/api", {"q": "b", "rows": "10"})


def test_search_request_validation():
    with pytest.raises(ValueError):
        SearchRequest(terms=())
    with pytest.raises(ValueError):
        SearchRequest(terms=("a",), rows=0)


def test_candidate_needs_a_url():
    with pytest.raises(ValueError):
        DatasetCandidate(package_id="p", title="t")


def test_search_parses_ckan_payload(portal):
    results = portal.search_packages(
        SearchRequest(terms=("hypertension", "prevalence"), scope="united states")
    )
    assert len(results) == 1
    c = results[0]
    assert c.package_id == "hyp-001"
    assert c.resource_url == RESOURCE_URL
    assert c.publisher == "Health Agency"


def test_search_prefers_csv_format(tmp_path):
    fixture = tmp_path / "fx"
    packages = [
        make_package("p-pdf", "first", resource_url="https://d/x.pdf", fmt="PDF"),
        make_package("p-csv", "second", resource_url="https://d/x.csv", fmt="CSV"),
    ]
    record_search(fixture, "q terms", ckan_payload(*packages))
    results = client(fixture, tmp_path).search_packages(SearchRequest(terms=("q", "terms")))
    assert [c.package_id for c in results] == ["p-csv", "p-pdf"]


def test_search_malformed_payload(tmp_path):
    fixture = tmp_path / "fx"
    record_search(fixture, "bad", '{"unexpected": true}')
    with pytest.raises(MalformedPortalResponse):
        client(fixture, tmp_path).search_packages(SearchRequest(terms=("bad",)))


def test_search_missing_fixture_is_unreachable(tmp_path):
    fixture = tmp_path / "empty"
    fixture.mkdir()
    with pytest.raises(PortalUnreachable):
        client(fixture, tmp_path).search_packages(SearchRequest(terms=("nothing",)))


def test_fetch_resource_downloads_and_caches(portal, portal_dir):
    transport = portal.transport
    handle = portal.fetch_resource(candidate())
    assert handle.local_path.read_bytes() == HYPERTENSION_CSV
    first_count = transport.request_count

    again = portal.fetch_resource(candidate())
    assert transport.request_count == first_count  # zero extra network calls
    assert again.content_hash == handle.content_hash
    assert again.local_path == handle.local_path


def test_cache_key_distinguishes_packages(portal):
    a = portal.fetch_resource(candidate(package_id="hyp-001"))
    record_download(portal.transport.fixture_dir, RESOURCE_URL, HYPERTENSION_CSV)
    b = portal.fetch_resource(candidate(package_id="other-pkg"))
    assert a.local_path != b.local_path


def test_clear_cache(portal):
    portal.fetch_resource(candidate())
    assert portal.clear_cache() == 1
    assert portal.clear_cache() == 0


def test_concurrent_fetches_single_download(portal):
    handles = []

    def fetch():
        handles.append(portal.fetch_resource(candidate()))

    threads = [threading.Thread(target=fetch) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len({h.content_hash for h in handles}) == 1
    # one search-free download; all later fetches hit the cache
    assert portal.transport.request_count == 1


def test_extract_download_link_prefers_csv():
    html = (
        '<a href="/files/data.tsv">tsv</a> '
        '<a href="/files/data.csv?v=2">csv</a> '
        "plain https://other.example/thing.tsv"
    )
    link = extract_download_link(html, "https://host.example/page")
    assert link == "https://host.example/files/data.csv?v=2"


def test_extract_download_link_tsv_fallback_and_none():
    assert extract_download_link(
        '<a href="x.tsv">t</a>', "https://h/p"
    ) == "https://h/x.tsv"
    assert extract_download_link("<p>nothing here</p>", "https://h/p") is None
    with pytest.raises(ValueError):
        extract_download_link("", "https://h/p")


def test_html_landing_page_followed(tmp_path):
    fixture = tmp_path / "fx"
    page_url = "https://data.example/page"
    html = '<html><body><a href="/dl/table.csv">download</a></body></html>'
    record_download(fixture, page_url, html)
    record_download(fixture, "https://data.example/dl/table.csv", HYPERTENSION_CSV)
    handle = client(fixture, tmp_path).fetch_resource(candidate(url=page_url))
    assert handle.local_path.read_bytes() == HYPERTENSION_CSV


def test_html_page_without_link_not_tabular(tmp_path):
    fixture = tmp_path / "fx"
    url = "https://data.example/page2"
    record_download(fixture, url, "<html><body>no downloads</body></html>")
    with pytest.raises(NotTabular):
        client(fixture, tmp_path).fetch_resource(candidate(url=url))


def test_binary_body_not_tabular(tmp_path):
    fixture = tmp_path / "fx"
    url = "https://data.example/blob"
    record_download(fixture, url, b"PK\x00\x01binary")
    with pytest.raises(NotTabular):
        client(fixture, tmp_path).fetch_resource(candidate(url=url))


def test_http_error_and_empty_body_are_download_failures(tmp_path):
    fixture = tmp_path / "fx"
    record_download(fixture, "https://data.example/404", "gone", status=404)
    record_download(fixture, "https://data.example/500", "boom", status=500)
    c = client(fixture, tmp_path)
    with pytest.raises(DownloadFailed):
        c.fetch_resource(candidate(url="https://data.example/404"))
    with pytest.raises(DownloadFailed):
        c.fetch_resource(candidate(url="https://data.example/500"))


def test_record_fixture_binary_round_trip(tmp_path):
    fixture = tmp_path / "fx"
    payload = bytes(range(256))
    record_fixture(fixture, "https://u/x", {}, payload)
    status, body = RecordedTransport(fixture).get("https://u/x", {})
    assert (status, body) == (200, payload)
