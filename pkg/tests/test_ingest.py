import io
from datetime import date, datetime, timezone

import pytest

from ledgermetrics.errors import (
    DuplicateHeight,
    EmptyInput,
    InvertedDateRange,
    NegativeBalance,
    SchemaError,
    SelfMerge,
)
from ledgermetrics.ingest import (
    AttributionKind,
    FileReport,
    build_ledger,
    parse_attribution,
    parse_balances,
    parse_blocks,
    parse_stake_keys,
    parse_timestamp,
    parse_tx_inputs,
    to_csv_text,
    write_attribution,
    write_balances,
    write_blocks,
    write_tx_inputs,
)


def src(text):
    return io.StringIO(text)


BLOCKS = "height,timestamp,reward_addresses,creator_tag\n"
BALANCES = "address,balance,snapshot_date\n"
ATTR = "kind,key,entity_id,effective_from,effective_to,source\n"
TX = "tx_id,input_addresses\n"


def test_block_row():
    (b,) = parse_blocks(src(BLOCKS + "1,2018-01-01T00:00:00Z,addrA|addrB,AntPool\n"))
    assert b.height == 1
    assert b.reward_addresses == ("addrA", "addrB")
    assert b.creator_tag == "AntPool"
    assert b.timestamp == datetime(2018, 1, 1, tzinfo=timezone.utc)


def test_duplicate_height():
    text = BLOCKS + "5,2018-01-01T00:00:00Z,a,\n5,2018-01-01T00:01:00Z,b,\n"
    with pytest.raises(DuplicateHeight):
        parse_blocks(src(text))


def test_bad_timestamp_is_row_level():
    rep = FileReport("x", "blocks")
    text = BLOCKS + "1,not-a-date,a,\n2,2018-01-01T00:00:00Z,b,\n3,1514764900,c,\n"
    out = parse_blocks(src(text), rep)
    assert [b.height for b in out] == [2, 3]
    assert rep.skipped == 1 and rep.errors[0]["line"] == 2


def test_epoch_timestamp():
    assert parse_timestamp("0") == datetime(1970, 1, 1, tzinfo=timezone.utc)
    assert parse_timestamp("2020-01-01T01:00:00+01:00") == datetime(2020, 1, 1, tzinfo=timezone.utc)


def test_schema_errors():
    with pytest.raises(SchemaError):
        parse_blocks(src("height,timestamp\n1,2018-01-01T00:00:00Z\n"))
    with pytest.raises(EmptyInput):
        parse_blocks(src(""))
    with pytest.raises(EmptyInput):
        parse_blocks(src(BLOCKS))


def test_balance_rows():
    rep = FileReport("x", "balances")
    out = parse_balances(src(BALANCES + "addrX,1000,2020-06-01\naddrY,0,2020-06-01\n"), rep)
    assert len(out) == 1 and out[0].balance == 1000 and out[0].snapshot_date == date(2020, 6, 1)
    assert rep.dropped_zero == 1
    with pytest.raises(NegativeBalance):
        parse_balances(src(BALANCES + "addrX,-5,2020-06-01\n"))


def test_attribution_rows():
    (r,) = parse_attribution(src(ATTR + "block_tag,AntPool,AntPool_entity,,,explorer\n"))
    assert r.kind is AttributionKind.BLOCK_TAG and r.effective_from is None
    (r,) = parse_attribution(src(ATTR + "legal_link,BTC.COM,BITMining,2021-04-01,,\n"))
    assert r.kind is AttributionKind.LEGAL_LINK and r.effective_from == date(2021, 4, 1)
    with pytest.raises(SelfMerge):
        parse_attribution(src(ATTR + "legal_link,X,X,,,\n"))
    with pytest.raises(InvertedDateRange):
        parse_attribution(src(ATTR + "address_tag,a,E,2021-05-01,2021-04-01,\n"))


def test_attribution_json(tmp_path):
    p = tmp_path / "attr.json"
    p.write_text('[{"kind": "address_tag", "key": "a", "entity_id": "E"}]')
    (r,) = parse_attribution(p)
    assert r.key == "a" and r.entity_id == "E"


def test_tx_inputs():
    rep = FileReport("x", "tx_inputs")
    out = parse_tx_inputs(src(TX + "tx1,a|b|c\ntx2,a|a\ntx3,\n"), rep)
    assert out == [("tx1", ("a", "b", "c")), ("tx2", ("a",))]
    assert rep.skipped == 1


def test_stake_keys():
    out = parse_stake_keys(src("address,stake_key\na,k1\nb,\n"))
    assert out == [("a", "k1"), ("b", None)]


def test_roundtrip():
    text = BLOCKS + "1,2018-01-01T00:00:00Z,addrA|addrB,AntPool\n2,2018-01-01T00:10:00Z,c,\n"
    assert to_csv_text(write_blocks, parse_blocks(src(text))) == text
    text = BALANCES + "a,12,2020-06-01\nb,7,2020-06-01\n"
    assert to_csv_text(write_balances, parse_balances(src(text))) == text
    text = ATTR + "address_tag,a,E,2020-01-01,2020-12-31,x\nlegal_link,E,F,2021-04-01,,y\n"
    assert to_csv_text(write_attribution, parse_attribution(src(text))) == text
    text = TX + "t1,a|b\nt2,c\n"
    assert to_csv_text(write_tx_inputs, parse_tx_inputs(src(text))) == text


def test_build_ledger_default_window():
    blocks = parse_blocks(src(BLOCKS + "1,2018-01-01T05:00:00Z,a,\n2,2018-01-03T07:00:00Z,b,\n"))
    led = build_ledger("btc", blocks)
    assert led.study_window == (datetime(2018, 1, 1, tzinfo=timezone.utc), datetime(2018, 1, 4, tzinfo=timezone.utc))
