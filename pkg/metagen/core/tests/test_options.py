"""Tests for config-file parsing and the shared option types."""

import argparse

import pytest
from django.test import SimpleTestCase

from metagen.core.errors import ConfigFileError
from metagen.core.generators import MODEL_KINDS
from metagen.core.services.options import (
    bin_counts,
    choice_list,
    int_list,
    non_negative_int,
    option_key,
    parse_bool,
    parse_config_file,
    positive_float,
    positive_int,
)
from metagen.core.tests.pipeline_helpers import TempDirMixin


class ConfigFileTest(TempDirMixin, SimpleTestCase):
    def write(self, text: str):
        path = self.tmp / "run.conf"
        path.write_text(text, encoding="utf-8")
        return path

    def test_keys_values_and_comments(self):
        path = self.write("# training run\nepochs = 20\n\nbatch-size=64   # per step\nmodels = meta-vae,smvae\n")

        values = parse_config_file(path)

        assert values == {"epochs": (2, "20"), "batch_size": (4, "64"), "models": (5, "meta-vae,smvae")}

    def test_dash_and_underscore_are_the_same_key(self):
        path = self.write("batch_size = 32\nbatch-size = 64\n")

        with pytest.raises(ConfigFileError) as excinfo:
            parse_config_file(path)

        assert excinfo.value.line_number == 2
        assert "already set on line 1" in str(excinfo.value)

    def test_line_without_equals(self):
        path = self.write("epochs = 3\nseeds 0,1\n")

        with pytest.raises(ConfigFileError, match=r"run.conf:2: expected 'key = value'"):
            parse_config_file(path)

    def test_missing_file(self):
        with pytest.raises(ConfigFileError, match="cannot read config file"):
            parse_config_file(self.tmp / "absent.conf")

    def test_option_key(self):
        assert option_key("--n-points") == "n_points"
        assert option_key(" dump_systems ") == "dump_systems"


class OptionTypesTest(SimpleTestCase):
    def test_parse_bool(self):
        assert parse_bool("Yes") is True
        assert parse_bool(" off ") is False
        with pytest.raises(argparse.ArgumentTypeError):
            parse_bool("maybe")

    def test_integers(self):
        assert positive_int("12") == 12
        assert non_negative_int("0") == 0
        for parse, text in ((positive_int, "0"), (positive_int, "x"), (non_negative_int, "-1")):
            with pytest.raises(argparse.ArgumentTypeError):
                parse(text)

    def test_positive_float(self):
        assert positive_float("1e-3") == 1e-3
        for text in ("0", "-2", "nan", "fast"):
            with pytest.raises(argparse.ArgumentTypeError):
                positive_float(text)

    def test_int_list(self):
        assert int_list("0, 1,2") == (0, 1, 2)
        for text in ("", "1,1", "1,a"):
            with pytest.raises(argparse.ArgumentTypeError):
                int_list(text)

    def test_bin_counts(self):
        assert bin_counts("50") == (50, 50)
        assert bin_counts("40,30") == (40, 30)
        for text in ("1,2,3", "0", ""):
            with pytest.raises(argparse.ArgumentTypeError):
                bin_counts(text)

    def test_choice_list_keeps_canonical_order(self):
        parse = choice_list(MODEL_KINDS)

        assert parse("vanilla-gan, meta-vae") == ("meta-vae", "vanilla-gan")
        with pytest.raises(argparse.ArgumentTypeError, match="subset of"):
            parse("meta-vae,diffusion")
        with pytest.raises(argparse.ArgumentTypeError):
            parse(" , ")
