import json

import pytest
from shapely.geometry import LineString, Polygon, box

from urbanstudio.core import LandUseCategory
from urbanstudio.errors import ConfigError, ValidationError
from urbanstudio.tiler import (
    CityLayers,
    GridCell,
    SHIFT_MODES,
    TileSet,
    augment,
    clip,
    load_city_layers,
    partition,
    split,
)

EXTENT_3X3 = (0.0, 0.0, 1350.0, 1350.0)


def enumerate_kept_footprints(extent, mode):
    """Independent oracle: enumerate every (cell, shift) footprint and test
    containment in the extent."""
    base = partition(extent)
    kept = set()
    for cell in base:
        for i, j in SHIFT_MODES[mode]:
            x0 = cell.x0 + cell.side * i / 3
            y0 = cell.y0 - cell.side * j / 3
            if (x0 >= extent[0] and y0 >= extent[1]
                    and x0 + cell.side <= extent[2] and y0 + cell.side <= extent[3]):
                kept.add((round(x0, 6), round(y0, 6)))
    return kept


class TestPartition:
    def test_3x2_extent(self):
        assert len(partition((0, 0, 1350, 900))) == 6

    def test_partial_cells_dropped(self):
        assert partition((0, 0, 449, 449)) == []

    def test_row_major_from_top_left(self):
        cells = partition((0, 0, 900, 900))
        assert [c.id for c in cells] == ["r0000c0000", "r0000c0001",
                                         "r0001c0000", "r0001c0001"]
        assert cells[0].x0 == 0 and cells[0].y0 == 450  # top-left cell
        assert all(c.is_base for c in cells)

    def test_cells_tile_without_overlap(self):
        cells = partition(EXTENT_3X3)
        for i, a in enumerate(cells):
            for b in cells[i + 1:]:
                assert not a.overlaps(b)


class TestAugment:
    def test_single_cell_tight_extent(self):
        cells = partition((0, 0, 450, 450))
        out = augment(cells, (0, 0, 450, 450))
        assert len(out) == 1 and out[0].is_base

    def test_3x3_yields_25(self):
        base = partition(EXTENT_3X3)
        out = augment(base, EXTENT_3X3)
        assert len(out) == 25
        # Footprints match the enumeration oracle exactly.
        got = {(round(c.x0, 6), round(c.y0, 6)) for c in out}
        assert got == enumerate_kept_footprints(EXTENT_3X3, "diagonal")

    def test_grid9_mode_matches_oracle(self):
        base = partition(EXTENT_3X3)
        out = augment(base, EXTENT_3X3, mode="grid9")
        got = {(round(c.x0, 6), round(c.y0, 6)) for c in out}
        assert got == enumerate_kept_footprints(EXTENT_3X3, "grid9")

    def test_output_at_most_five_per_cell(self):
        base = partition((0, 0, 4500, 4500))
        out = augment(base, (0, 0, 4500, 4500))
        assert len(out) <= 5 * len(base)

    def test_lineage_recorded(self):
        base = partition(EXTENT_3X3)
        out = augment(base, EXTENT_3X3)
        shifted = [c for c in out if not c.is_base]
        assert shifted
        for cell in shifted:
            assert cell.base_id in {b.id for b in base}
            assert cell.dx_frac in (1 / 3, 2 / 3)
            assert cell.dy_frac in (1 / 3, 2 / 3)

    def test_non_base_input_rejected(self):
        base = partition(EXTENT_3X3)
        out = augment(base, EXTENT_3X3)
        with pytest.raises(ValidationError):
            augment(out, EXTENT_3X3)


class TestSplit:
    def test_ten_cells_one_test(self):
        cells = partition((0, 0, 4500, 900))  # 10 x 2 -> use first 10 base? 20 cells
        cells = cells[:10]
        tileset = split(cells, test_ratio=0.1, seed=3)
        assert sum(1 for c in cells if tileset.labels[c.id] == "test") == 1

    def test_no_train_test_overlap(self):
        base = partition(EXTENT_3X3)
        cells = augment(base, EXTENT_3X3)
        tileset = split(cells, seed=11)
        test = tileset.cells_with_label("test")
        train = tileset.cells_with_label("train")
        assert test and train
        for tr in train:
            for te in test:
                assert not tr.overlaps(te)

    def test_partition_of_ids(self):
        base = partition(EXTENT_3X3)
        cells = augment(base, EXTENT_3X3)
        tileset = split(cells, seed=5)
        assert set(tileset.labels) == {c.id for c in cells}
        assert set(tileset.labels.values()) <= {"train", "test", "excluded"}

    def test_deterministic_manifest(self):
        base = partition(EXTENT_3X3)
        cells = augment(base, EXTENT_3X3)
        a = split(cells, seed=7, extent=EXTENT_3X3).manifest_json()
        b = split(cells, seed=7, extent=EXTENT_3X3).manifest_json()
        assert a == b

    def test_seed_changes_selection(self):
        base = partition((0, 0, 4500, 4500))
        seeds = {split(base, seed=s).cells_with_label("test")[0].id
                 for s in range(5)}
        assert len(seeds) > 1

    def test_bad_ratio_rejected(self):
        base = partition(EXTENT_3X3)
        for ratio in (0.0, 1.0, -0.5, 2.0):
            with pytest.raises(ValidationError):
                split(base, test_ratio=ratio, seed=0)

    def test_test_cells_are_base_only(self):
        base = partition(EXTENT_3X3)
        cells = augment(base, EXTENT_3X3)
        tileset = split(cells, seed=2)
        assert all(c.is_base for c in tileset.cells_with_label("test"))

    def test_manifest_round_trip(self):
        base = partition(EXTENT_3X3)
        tileset = split(base, seed=9, extent=EXTENT_3X3, crs="EPSG:3857")
        doc = json.loads(tileset.manifest_json())
        back = TileSet.from_manifest(doc)
        assert back.manifest_json() == tileset.manifest_json()


class TestClip:
    def cell(self):
        return GridCell(id="c", x0=1000.0, y0=2000.0)

    def test_inside_polygon_translated(self):
        layers = CityLayers(crs="EPSG:3857",
                            water=[box(1100, 2100, 1200, 2200)])
        bundle = clip(self.cell(), layers)
        assert len(bundle.water) == 1
        assert bundle.water[0].bounds == (100.0, 100.0, 200.0, 200.0)

    def test_straddling_polygon_area_bookkeeping(self):
        # Oracle: rectangle intersection arithmetic, independent of shapely.
        rect = (900.0, 2100.0, 1100.0, 2250.0)  # 200 x 150, half outside
        ix0, iy0 = max(rect[0], 1000.0), max(rect[1], 2000.0)
        ix1, iy1 = min(rect[2], 1450.0), min(rect[3], 2450.0)
        expected_area = (ix1 - ix0) * (iy1 - iy0)
        layers = CityLayers(crs="x", land_use=[(box(*rect),
                                                LandUseCategory.PARK)])
        bundle = clip(self.cell(), layers)
        total = sum(g.area for g, _ in bundle.land_use)
        assert total == pytest.approx(expected_area)
        original = (rect[2] - rect[0]) * (rect[3] - rect[1])
        outside = original - expected_area
        assert total == pytest.approx(original - outside)

    def test_empty_layer_allowed(self):
        bundle = clip(self.cell(), CityLayers(crs="x"))
        assert bundle.water == [] and bundle.buildings == []

    def test_crs_mismatch_rejected(self):
        layers = CityLayers(crs="EPSG:32618")
        with pytest.raises(ConfigError, match="CRS mismatch"):
            clip(self.cell(), layers, crs="EPSG:3857")

    def test_line_clipped(self):
        layers = CityLayers(crs="x",
                            major_roads=[LineString([(0, 2225), (3000, 2225)])])
        bundle = clip(self.cell(), layers)
        assert len(bundle.major_roads) == 1
        assert bundle.major_roads[0].length == pytest.approx(450.0)

    def test_building_heights_carried(self):
        layers = CityLayers(crs="x", buildings=[
            (box(1010, 2010, 1030, 2030), 12.5),
            (box(1050, 2050, 1070, 2070), None),
        ])
        bundle = clip(self.cell(), layers)
        heights = [h for _, h in bundle.buildings]
        assert 12.5 in heights and None in heights


class TestIngest:
    def write_geojson(self, path, features):
        doc = {"type": "FeatureCollection", "features": features}
        path.write_text(json.dumps(doc))

    def polygon_feature(self, props):
        return {"type": "Feature", "properties": props, "geometry": {
            "type": "Polygon",
            "coordinates": [[[0, 0], [100, 0], [100, 100], [0, 100], [0, 0]]]}}

    def test_load_layers(self, tmp_path):
        self.write_geojson(tmp_path / "lu.geojson",
                           [self.polygon_feature({"use": "R1"})])
        self.write_geojson(tmp_path / "bld.geojson",
                           [self.polygon_feature({"h": 33.0})])
        self.write_geojson(tmp_path / "roads.geojson", [
            {"type": "Feature", "properties": {"highway": "primary"},
             "geometry": {"type": "LineString", "coordinates": [[0, 0], [9, 9]]}},
            {"type": "Feature", "properties": {"highway": "residential"},
             "geometry": {"type": "LineString", "coordinates": [[0, 9], [9, 0]]}},
        ])
        config = {
            "crs": "EPSG:3857",
            "layers": {"land_use": "lu.geojson", "buildings": "bld.geojson",
                       "roads": "roads.geojson"},
            "land_use_attribute": "use",
            "land_use_mapping": {"R1": "residential"},
            "height_attribute": "h",
            "highway_attribute": "highway",
            "major_road_tags": ["primary", "trunk", "motorway"],
        }
        layers = load_city_layers(config, tmp_path)
        assert layers.land_use[0][1] == LandUseCategory.RESIDENTIAL
        assert layers.buildings[0][1] == 33.0
        assert len(layers.major_roads) == 1 and len(layers.minor_roads) == 1

    def test_unknown_land_use_rejected(self, tmp_path):
        self.write_geojson(tmp_path / "lu.geojson",
                           [self.polygon_feature({"use": "???"})])
        config = {"crs": "x", "layers": {"land_use": "lu.geojson"},
                  "land_use_attribute": "use"}
        with pytest.raises(ConfigError, match="does not map"):
            load_city_layers(config, tmp_path)

    def test_unknown_config_keys_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown city config keys"):
            load_city_layers({"crs": "x", "bogus": 1}, tmp_path)
