import pytest

from bessctl.linefmt import LineFormatError, parse_number, read_key_values, tokenize


def test_tokenize_skips_blanks_and_comments():
    lines = ["# header", "", "  a 1  # trailing", "b 2"]
    out = list(tokenize(lines, "doc"))
    assert out == [(3, ["a", "1"]), (4, ["b", "2"])]


def test_parse_number_plain_and_scientific():
    assert parse_number("1.5") == 1.5
    assert parse_number("-2e-3") == -2e-3
    assert parse_number("657.1") == 657.1


def test_parse_number_power_of_ten_shorthand():
    assert parse_number("8.29^{-18}") == 8.29e-18
    assert parse_number("-2.16^{-4}") == -2.16e-4
    assert parse_number("1.4^-3") == 1.4e-3
    assert parse_number("3^{2}") == 300.0


def test_parse_number_rejects_junk():
    with pytest.raises(LineFormatError) as err:
        parse_number("abc", "doc.txt", 7)
    assert "doc.txt:7" in str(err.value)


def test_read_key_values(tmp_path):
    path = tmp_path / "cfg.txt"
    path.write_text("# c\nalpha 1\nbeta two words\n", encoding="utf-8")
    assert read_key_values(path) == {"alpha": "1", "beta": "two words"}


def test_read_key_values_rejects_bare_key(tmp_path):
    path = tmp_path / "cfg.txt"
    path.write_text("alpha\n", encoding="utf-8")
    with pytest.raises(LineFormatError) as err:
        read_key_values(path)
    assert ":1:" in str(err.value)
