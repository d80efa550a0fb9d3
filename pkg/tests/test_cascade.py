"""Cascade XML parsing: schema acceptance and loud rejection paths."""

import pytest

from densiface.cascade import parse_cascade
from densiface.errors import FormatError, UnsupportedCascadeError

FIXTURE = """<?xml version="1.0"?>
<opencv_storage>
<cascade type_id="opencv-cascade-classifier">
  <stageType>BOOST</stageType>
  <featureType>HAAR</featureType>
  <height>24</height>
  <width>24</width>
  <stageParams>
    <maxWeakCount>2</maxWeakCount></stageParams>
  <featureParams>
    <maxCatCount>0</maxCatCount></featureParams>
  <stageNum>1</stageNum>
  <stages>
    <_>
      <maxWeakCount>2</maxWeakCount>
      <stageThreshold>-0.5</stageThreshold>
      <weakClassifiers>
        <_>
          <internalNodes>
            0 -1 0 1.0e-02</internalNodes>
          <leafValues>
            -0.9 0.8</leafValues></_>
        <_>
          <internalNodes>
            0 -1 1 -2.0e-03</internalNodes>
          <leafValues>
            0.3 -0.4</leafValues></_></weakClassifiers></_></stages>
  <features>
    <_>
      <rects>
        <_>
          0 0 24 12 -1.</_>
        <_>
          0 12 24 12 1.</_></rects>
      <tilted>0</tilted></_>
    <_>
      <rects>
        <_>
          6 6 12 12 -1.</_>
        <_>
          8 8 8 8 2.5</_></rects></_></features>
</cascade>
</opencv_storage>
"""


class TestParseCascade:
    def test_fixture_counts_and_values(self):
        c = parse_cascade(FIXTURE)
        assert (c.base_width, c.base_height) == (24, 24)
        assert len(c.stages) == 1
        assert len(c.stages[0].weak_classifiers) == 2
        assert len(c.features) == 2
        assert c.stages[0].stage_threshold == -0.5
        s0, s1 = c.stages[0].weak_classifiers
        assert (s0.feature_index, s0.threshold) == (0, 0.01)
        assert (s0.left_value, s0.right_value) == (-0.9, 0.8)
        assert (s1.feature_index, s1.threshold) == (1, -0.002)
        assert c.features[0].rects == ((0, 0, 24, 12, -1.0), (0, 12, 24, 12, 1.0))
        assert c.features[1].rects[1] == (8, 8, 8, 8, 2.5)

    def test_counts_round_trip(self):
        # counts recovered from the parsed structure match the file text
        c = parse_cascade(FIXTURE)
        assert FIXTURE.count("<stageThreshold>") == len(c.stages)
        assert FIXTURE.count("<internalNodes>") == sum(
            len(s.weak_classifiers) for s in c.stages)
        assert FIXTURE.count("<rects>") == len(c.features)

    def test_empty_document(self):
        with pytest.raises(FormatError):
            parse_cascade("")

    def test_malformed_xml_reports_position(self):
        with pytest.raises(FormatError, match="line"):
            parse_cascade("<opencv_storage><cascade></opencv_storage>")

    def test_tilted_feature_rejected(self):
        bad = FIXTURE.replace("<tilted>0</tilted>", "<tilted>1</tilted>")
        with pytest.raises(UnsupportedCascadeError, match="tilted"):
            parse_cascade(bad)

    def test_tree_classifier_rejected(self):
        bad = FIXTURE.replace("0 -1 0 1.0e-02", "1 2 0 1.0e-02 0 -1 1 0.5")
        with pytest.raises(UnsupportedCascadeError):
            parse_cascade(bad)

    def test_lbp_feature_type_rejected(self):
        bad = FIXTURE.replace("<featureType>HAAR</featureType>",
                              "<featureType>LBP</featureType>")
        with pytest.raises(UnsupportedCascadeError, match="LBP"):
            parse_cascade(bad)

    def test_out_of_range_feature_index(self):
        bad = FIXTURE.replace("0 -1 1 -2.0e-03", "0 -1 7 -2.0e-03")
        with pytest.raises(FormatError, match="feature index"):
            parse_cascade(bad)

    def test_single_sign_weights_rejected(self):
        bad = FIXTURE.replace("0 0 24 12 -1.", "0 0 24 12 1.")
        with pytest.raises(FormatError, match="mixed sign"):
            parse_cascade(bad)

    def test_rect_outside_base_window(self):
        bad = FIXTURE.replace("6 6 12 12 -1.", "6 6 24 12 -1.")
        with pytest.raises(FormatError, match="base window"):
            parse_cascade(bad)
