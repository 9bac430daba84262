//! Country assignment, regional credibility statistics, sentiment clusters and heatmaps.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use geo::{BoundingRect, Contains, Distance, Haversine, MultiPolygon, Point, Rect};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::model::{GeoPoint, Verdict};
use crate::sentiment::SentimentLabel;

pub const DEFAULT_BORDER_EPSILON_KM: f64 = 10.0;
pub const DEFAULT_MIN_COUNT: usize = 25;
pub const RECENT_COUNTRIES: usize = 10;
pub const UNASSIGNED: &str = "Unassigned";

const BUNDLED_BOUNDARIES: &str = include_str!("../data/world_coarse.geojson");
const BUNDLED_CONTINENTS: &str = include_str!("../data/continents.csv");
const KM_PER_DEGREE: f64 = 111.195;

#[derive(Debug, Clone)]
struct Country {
    id: String,
    shape: MultiPolygon<f64>,
    bbox: Rect<f64>,
}

/// Immutable country polygon index.
#[derive(Debug, Clone, Default)]
pub struct CountryBoundaries {
    countries: Vec<Country>,
}

fn feature_id(feature: &geojson::Feature) -> Option<String> {
    for key in ["id", "iso_a2", "ISO_A2", "country"] {
        if let Some(Value::String(s)) = feature.property(key) {
            return Some(s.clone());
        }
    }
    match &feature.id {
        Some(geojson::feature::Id::String(s)) => Some(s.clone()),
        _ => None,
    }
}

impl CountryBoundaries {
    /// Reads a FeatureCollection of Polygon / MultiPolygon features. The country id comes from
    /// the `id`, `iso_a2`, `ISO_A2` or `country` property, or the feature id.
    pub fn from_geojson(content: &str) -> Result<Self> {
        let gj: geojson::GeoJson = content
            .parse()
            .map_err(|e: geojson::Error| Error::Boundary(e.to_string()))?;
        let geojson::GeoJson::FeatureCollection(fc) = gj else {
            return Err(Error::Boundary("expected a FeatureCollection".into()));
        };
        let mut countries = Vec::with_capacity(fc.features.len());
        for (i, feature) in fc.features.iter().enumerate() {
            let id = feature_id(feature)
                .ok_or_else(|| Error::Boundary(format!("feature {i} has no country id")))?;
            let geometry = feature
                .geometry
                .clone()
                .ok_or_else(|| Error::Boundary(format!("feature {id} has no geometry")))?;
            let geometry: geo::Geometry<f64> = geometry
                .try_into()
                .map_err(|e: geojson::Error| Error::Boundary(format!("{id}: {e}")))?;
            let shape = match geometry {
                geo::Geometry::Polygon(p) => MultiPolygon::new(vec![p]),
                geo::Geometry::MultiPolygon(mp) => mp,
                _ => return Err(Error::Boundary(format!("{id}: geometry is not polygonal"))),
            };
            let bbox = shape
                .bounding_rect()
                .ok_or_else(|| Error::Boundary(format!("{id}: empty geometry")))?;
            countries.push(Country { id, shape, bbox });
        }
        Ok(CountryBoundaries { countries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_geojson(&content)
    }

    /// Coarse hand-drawn outlines for a handful of countries, for tests and demos.
    pub fn bundled() -> Self {
        Self::from_geojson(BUNDLED_BOUNDARIES).expect("bundled boundaries are valid")
    }

    pub fn len(&self) -> usize {
        self.countries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.countries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.countries.iter().map(|c| c.id.as_str())
    }

    fn containing(&self, p: GeoPoint) -> Option<usize> {
        let pt = Point::new(p.lon, p.lat);
        self.countries.iter().position(|c| c.shape.contains(&pt))
    }

    pub fn locate(&self, p: GeoPoint) -> Option<&str> {
        self.containing(p).map(|i| self.countries[i].id.as_str())
    }

    fn near_bbox(c: &Country, p: GeoPoint, km: f64) -> bool {
        let dlat = km / KM_PER_DEGREE;
        let dlon = km / (KM_PER_DEGREE * p.lat.to_radians().cos().max(1e-6));
        let (min, max) = (c.bbox.min(), c.bbox.max());
        p.lat >= min.y - dlat && p.lat <= max.y + dlat && p.lon >= min.x - dlon && p.lon <= max.x + dlon
    }

    /// Great-circle distance in km from `p` to the nearest edge of country `idx`.
    fn boundary_distance_km(&self, idx: usize, p: GeoPoint) -> f64 {
        let c = &self.countries[idx];
        let mut best = f64::INFINITY;
        for poly in &c.shape {
            for ring in std::iter::once(poly.exterior()).chain(poly.interiors()) {
                for seg in ring.lines() {
                    best = best.min(segment_distance_km(p, seg.start, seg.end));
                }
            }
        }
        best
    }

    /// Whether `p` is within `km` of the boundary of any country other than `except`.
    fn near_other_border(&self, p: GeoPoint, except: Option<usize>, km: f64) -> bool {
        self.countries.iter().enumerate().any(|(i, c)| {
            Some(i) != except && Self::near_bbox(c, p, km) && self.boundary_distance_km(i, p) <= km
        })
    }
}

/// Closest point on the segment found in a local equirectangular frame centred on `p`,
/// then measured with the haversine formula.
fn segment_distance_km(p: GeoPoint, a: geo::Coord<f64>, b: geo::Coord<f64>) -> f64 {
    let cos = p.lat.to_radians().cos();
    let wrap = |d: f64| (d + 540.0).rem_euclid(360.0) - 180.0;
    let ax = wrap(a.x - p.lon) * cos;
    let ay = a.y - p.lat;
    let bx = wrap(b.x - p.lon) * cos;
    let by = b.y - p.lat;
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (-(ax * dx + ay * dy) / len2).clamp(0.0, 1.0)
    };
    let lat = p.lat + ay + t * dy;
    let lon = p.lon + (ax + t * dx) / cos.max(1e-12);
    Haversine::distance(Point::new(p.lon, p.lat), Point::new(lon, lat)) / 1000.0
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CountryAssignment {
    Country(String),
    Unassigned,
}

impl CountryAssignment {
    pub fn id(&self) -> &str {
        match self {
            CountryAssignment::Country(c) => c,
            CountryAssignment::Unassigned => UNASSIGNED,
        }
    }
}

/// Most frequent of the first [`RECENT_COUNTRIES`] entries (newest first); ties go to the
/// country seen most recently.
fn recent_mode(recent: &[String]) -> Option<&str> {
    let recent = &recent[..recent.len().min(RECENT_COUNTRIES)];
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    for (pos, c) in recent.iter().enumerate() {
        let e = counts.entry(c.as_str()).or_insert((0, pos));
        e.0 += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
        .map(|(c, _)| c)
}

/// Point-in-polygon country, overridden by the author's usual country when the point lies
/// within `border_epsilon_km` of another country's border.
///
/// `recent_countries` lists the author's recent post countries, newest first.
pub fn assign_country(
    geo: GeoPoint,
    boundaries: &CountryBoundaries,
    recent_countries: &[String],
    border_epsilon_km: f64,
) -> Result<CountryAssignment> {
    if !(border_epsilon_km >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "border epsilon {border_epsilon_km} must be non-negative"
        )));
    }
    let inside = boundaries.containing(geo);
    if !recent_countries.is_empty() && boundaries.near_other_border(geo, inside, border_epsilon_km) {
        if let Some(mode) = recent_mode(recent_countries) {
            return Ok(CountryAssignment::Country(mode.to_string()));
        }
    }
    Ok(match inside {
        Some(i) => CountryAssignment::Country(boundaries.countries[i].id.clone()),
        None => CountryAssignment::Unassigned,
    })
}

/// Country id to continent name.
#[derive(Debug, Clone, Default)]
pub struct ContinentMap {
    map: HashMap<String, String>,
}

impl ContinentMap {
    /// `country,continent` rows; a leading header row is skipped.
    pub fn from_csv(content: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(content.as_bytes());
        let mut map = HashMap::new();
        for (i, row) in reader.records().enumerate() {
            let row = row?;
            if row.len() != 2 {
                return Err(Error::parse("continents", i + 1, "expected country,continent"));
            }
            if i == 0 && row[0].eq_ignore_ascii_case("country") {
                continue;
            }
            map.insert(row[0].to_string(), row[1].to_string());
        }
        Ok(ContinentMap { map })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&content)
    }

    pub fn bundled() -> Self {
        Self::from_csv(BUNDLED_CONTINENTS).expect("bundled continent table is valid")
    }

    pub fn continent(&self, country: &str) -> Option<&str> {
        self.map.get(country).map(String::as_str)
    }

    pub fn contains(&self, country: &str) -> bool {
        self.map.contains_key(country)
    }

    pub fn insert(&mut self, country: impl Into<String>, continent: impl Into<String>) {
        self.map.insert(country.into(), continent.into());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Country,
    Continent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionStats {
    pub region: String,
    pub credible_count: usize,
    pub not_credible_count: usize,
    pub credible_pct: f64,
    pub not_credible_pct: f64,
}

impl RegionStats {
    fn new(region: String, credible: usize, not_credible: usize) -> Self {
        let total = credible + not_credible;
        let (cp, np) = if total == 0 {
            (0.0, 0.0)
        } else {
            let cp = 100.0 * credible as f64 / total as f64;
            (cp, 100.0 * not_credible as f64 / total as f64)
        };
        RegionStats {
            region,
            credible_count: credible,
            not_credible_count: not_credible,
            credible_pct: cp,
            not_credible_pct: np,
        }
    }

    pub fn total(&self) -> usize {
        self.credible_count + self.not_credible_count
    }
}

/// Per-region verdict counts. Merging is associative and commutative, so shards can be
/// tallied independently and combined in any order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RegionTally {
    counts: BTreeMap<String, (usize, usize)>,
}

impl RegionTally {
    pub fn add(&mut self, region: &str, verdict: Verdict) {
        let e = self.counts.entry(region.to_string()).or_default();
        match verdict {
            Verdict::Credible => e.0 += 1,
            Verdict::NotCredible => e.1 += 1,
        }
    }

    pub fn merge(mut self, other: RegionTally) -> RegionTally {
        for (k, (c, n)) in other.counts {
            let e = self.counts.entry(k).or_default();
            e.0 += c;
            e.1 += n;
        }
        self
    }

    pub fn report(&self, min_count: usize) -> AggregateReport {
        let mut regions = Vec::new();
        let mut excluded = Vec::new();
        for (region, &(c, n)) in &self.counts {
            let stats = RegionStats::new(region.clone(), c, n);
            if stats.total() >= min_count {
                regions.push(stats);
            } else {
                excluded.push(stats);
            }
        }
        // Stable sort keeps region-name order among equal totals.
        regions.sort_by(|a, b| b.total().cmp(&a.total()));
        AggregateReport { regions, excluded }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateReport {
    /// Regions with at least `min_count` records, largest first.
    pub regions: Vec<RegionStats>,
    /// Regions below `min_count`, by name.
    pub excluded: Vec<RegionStats>,
}

impl AggregateReport {
    pub fn total_records(&self) -> usize {
        self.regions.iter().chain(&self.excluded).map(RegionStats::total).sum()
    }
}

/// Region for one record. Countries missing from the continent table count as Unassigned.
pub fn region_of<'a>(
    country: &'a CountryAssignment,
    level: Level,
    continents: &'a ContinentMap,
) -> &'a str {
    match country {
        CountryAssignment::Unassigned => UNASSIGNED,
        CountryAssignment::Country(c) => match level {
            Level::Country if continents.contains(c) => c,
            Level::Continent => continents.continent(c).unwrap_or(UNASSIGNED),
            Level::Country => UNASSIGNED,
        },
    }
}

pub fn aggregate(
    records: &[(CountryAssignment, Verdict)],
    level: Level,
    min_count: usize,
    continents: &ContinentMap,
) -> AggregateReport {
    let mut tally = RegionTally::default();
    for (country, verdict) in records {
        tally.add(region_of(country, level, continents), *verdict);
    }
    tally.report(min_count)
}

pub fn write_region_csv<W: std::io::Write>(stats: &[RegionStats], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "region",
        "credible_count",
        "not_credible_count",
        "credible_pct",
        "not_credible_pct",
    ])?;
    for s in stats {
        w.write_record([
            s.region.clone(),
            s.credible_count.to_string(),
            s.not_credible_count.to_string(),
            format!("{:.6}", s.credible_pct),
            format!("{:.6}", s.not_credible_pct),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<region csv>", e))?;
    Ok(())
}

/// Grid cell of a point: `floor((lat + 90) / size)`, `floor((lon + 180) / size)`.
pub fn cell_index(p: GeoPoint, cell_size_deg: f64) -> (i64, i64) {
    (
        ((p.lat + 90.0) / cell_size_deg).floor() as i64,
        ((p.lon + 180.0) / cell_size_deg).floor() as i64,
    )
}

fn check_cell_size(cell_size_deg: f64) -> Result<()> {
    if !(cell_size_deg > 0.0 && cell_size_deg.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "cell size {cell_size_deg} must be a positive number of degrees"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cluster {
    pub centroid: GeoPoint,
    pub member_count: usize,
    pub positive: usize,
    pub negative: usize,
    pub neutral: usize,
    pub color: [u8; 3],
}

/// White when positive and negative balance; otherwise white blended toward pure green
/// (positive majority) or pure red (negative majority) by `|pos - neg| / (pos + neg)`,
/// channels rounded to the nearest integer.
pub fn cluster_color(positive: usize, negative: usize) -> [u8; 3] {
    if positive == negative {
        return [255, 255, 255];
    }
    let t = positive.abs_diff(negative) as f64 / (positive + negative) as f64;
    let fade = (255.0 * (1.0 - t)).round() as u8;
    if positive > negative {
        [fade, 255, fade]
    } else {
        [255, fade, fade]
    }
}

pub fn hex_color(c: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Fixed-grid clusters ordered by cell (south to north, west to east).
pub fn cluster_points(records: &[(GeoPoint, SentimentLabel)], cell_size_deg: f64) -> Result<Vec<Cluster>> {
    check_cell_size(cell_size_deg)?;
    #[derive(Default)]
    struct Acc {
        lat: f64,
        lon: f64,
        n: usize,
        pos: usize,
        neg: usize,
        neu: usize,
    }
    let mut cells: BTreeMap<(i64, i64), Acc> = BTreeMap::new();
    for (p, label) in records {
        let acc = cells.entry(cell_index(*p, cell_size_deg)).or_default();
        acc.lat += p.lat;
        acc.lon += p.lon;
        acc.n += 1;
        match label.coarse() {
            SentimentLabel::Positive => acc.pos += 1,
            SentimentLabel::Negative => acc.neg += 1,
            _ => acc.neu += 1,
        }
    }
    Ok(cells
        .into_values()
        .map(|a| Cluster {
            centroid: GeoPoint {
                lat: a.lat / a.n as f64,
                lon: a.lon / a.n as f64,
            },
            member_count: a.n,
            positive: a.pos,
            negative: a.neg,
            neutral: a.neu,
            color: cluster_color(a.pos, a.neg),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatmapClass {
    NotCredible,
    Credible,
    Both,
}

impl HeatmapClass {
    fn counts(self, v: Verdict) -> bool {
        matches!(
            (self, v),
            (HeatmapClass::Both, _)
                | (HeatmapClass::Credible, Verdict::Credible)
                | (HeatmapClass::NotCredible, Verdict::NotCredible)
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CellCounts {
    pub credible: usize,
    pub not_credible: usize,
}

impl CellCounts {
    pub fn total(&self) -> usize {
        self.credible + self.not_credible
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapGrid {
    pub cell_size_deg: f64,
    pub which: HeatmapClass,
    pub cells: BTreeMap<(i64, i64), CellCounts>,
}

impl HeatmapGrid {
    pub fn total(&self) -> usize {
        self.cells.values().map(CellCounts::total).sum()
    }
}

pub fn heatmap(records: &[(GeoPoint, Verdict)], cell_size_deg: f64, which: HeatmapClass) -> Result<HeatmapGrid> {
    check_cell_size(cell_size_deg)?;
    let mut cells: BTreeMap<(i64, i64), CellCounts> = BTreeMap::new();
    for (p, v) in records {
        if !which.counts(*v) {
            continue;
        }
        let c = cells.entry(cell_index(*p, cell_size_deg)).or_default();
        match v {
            Verdict::Credible => c.credible += 1,
            Verdict::NotCredible => c.not_credible += 1,
        }
    }
    Ok(HeatmapGrid {
        cell_size_deg,
        which,
        cells,
    })
}

/// Clusters as Point features with `count`, `positive`, `negative`, `neutral` and `color`.
pub fn clusters_geojson(clusters: &[Cluster]) -> Value {
    let features: Vec<Value> = clusters
        .iter()
        .map(|c| {
            json!({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [c.centroid.lon, c.centroid.lat]},
                "properties": {
                    "count": c.member_count,
                    "positive": c.positive,
                    "negative": c.negative,
                    "neutral": c.neutral,
                    "color": hex_color(c.color),
                },
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}

/// Cells as square Polygon features with `count`, `credible` and `not_credible`.
pub fn heatmap_geojson(grid: &HeatmapGrid) -> Value {
    let s = grid.cell_size_deg;
    let features: Vec<Value> = grid
        .cells
        .iter()
        .map(|(&(li, lj), c)| {
            let lat0 = li as f64 * s - 90.0;
            let lon0 = lj as f64 * s - 180.0;
            let ring = [
                [lon0, lat0],
                [lon0 + s, lat0],
                [lon0 + s, lat0 + s],
                [lon0, lat0 + s],
                [lon0, lat0],
            ];
            json!({
                "type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": [ring]},
                "properties": {
                    "count": c.total(),
                    "credible": c.credible,
                    "not_credible": c.not_credible,
                },
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}

/// Self-contained page drawing a FeatureCollection on an equirectangular canvas.
pub fn html_page(title: &str, collection: &Value) -> String {
    let data = collection.to_string().replace("</", "<\\/");
    let title = title.replace('&', "&amp;").replace('<', "&lt;");
    format!(
        r##"<!DOCTYPE html>
<html>
<head><meta charset="utf-8"><title>{title}</title>
<style>body{{margin:0;background:#1d2230;color:#ddd;font-family:sans-serif}}canvas{{display:block;margin:auto}}</style>
</head>
<body>
<h3 style="text-align:center">{title}</h3>
<canvas id="map" width="1440" height="720"></canvas>
<script>
const data = {data};
const cv = document.getElementById("map"), ctx = cv.getContext("2d");
const X = lon => (lon + 180) / 360 * cv.width, Y = lat => (90 - lat) / 180 * cv.height;
const max = Math.max(1, ...data.features.map(f => f.properties.count || 0));
ctx.strokeStyle = "#333"; ctx.strokeRect(0, 0, cv.width, cv.height);
for (const f of data.features) {{
  const g = f.geometry, p = f.properties;
  if (g.type === "Point") {{
    ctx.beginPath();
    ctx.arc(X(g.coordinates[0]), Y(g.coordinates[1]), 3 + 12 * Math.sqrt(p.count / max), 0, 2 * Math.PI);
    ctx.fillStyle = p.color || "#fff"; ctx.globalAlpha = 0.8; ctx.fill(); ctx.globalAlpha = 1;
  }} else if (g.type === "Polygon") {{
    const r = g.coordinates[0];
    ctx.fillStyle = "rgba(220,30,30," + (0.15 + 0.85 * p.count / max) + ")";
    ctx.fillRect(X(r[0][0]), Y(r[2][1]), X(r[1][0]) - X(r[0][0]), Y(r[0][1]) - Y(r[2][1]));
  }}
}}
</script>
</body>
</html>
"##
    )
}
