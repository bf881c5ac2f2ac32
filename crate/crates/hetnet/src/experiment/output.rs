//! CSV and SVG writers. Floats are written with Rust's shortest
//! round-trip formatting, so identical inputs give identical bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::deployment::{Deployment, Tier};
use crate::geometry::{ApolloniusBoundary, CoverageGrid, Region};
use crate::msa::Trace;

pub type CsvResult = Result<(), csv::Error>;

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, csv::Error> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

/// Header row plus one row per record, all fields already formatted.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CsvResult {
    let mut w = writer(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Allocation matrix with one row per user and one column per station.
pub fn write_matrix(path: &Path, m: &Array2<f64>) -> CsvResult {
    let mut w = writer(path)?;
    let mut header = vec!["user".to_string()];
    header.extend((0..m.ncols()).map(|b| format!("bs{}", b + 1)));
    w.write_record(&header)?;
    for (u, row) in m.outer_iter().enumerate() {
        let mut rec = vec![(u + 1).to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format price history `(iteration, multiplier, value)`, keeping
/// every `stride`-th round and always the last one.
pub fn write_trace(path: &Path, trace: &Trace, stride: usize) -> CsvResult {
    let mut w = writer(path)?;
    w.write_record(["iteration", "multiplier", "value"])?;
    let n = trace.prices.len();
    for (t, p) in trace.prices.iter().enumerate() {
        let iteration = t + 1;
        if iteration % stride.max(1) != 0 && iteration != n {
            continue;
        }
        let it = iteration.to_string();
        for (family, values) in [
            ("station_dl", &p.station_dl),
            ("station_ul", &p.station_ul),
            ("user_dl", &p.user_dl),
            ("user_ul", &p.user_ul),
        ] {
            for (i, v) in values.iter().enumerate() {
                w.write_record([it.as_str(), &format!("{family}{}", i + 1), &v.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn station_color(i: usize) -> String {
    // Golden-angle hue walk gives distinct neighbouring colours.
    let hue = (i as f64 * 137.508) % 360.0;
    format!("hsl({hue:.1},55%,78%)")
}

/// Coverage map: coloured raster (horizontal runs merged), Apollonius
/// overlays, stations as dots (macro larger) and users as crosses.
pub fn coverage_svg(
    region: &Region,
    grid: &CoverageGrid,
    deployment: &Deployment,
    overlays: &[ApolloniusBoundary],
    title: &str,
) -> String {
    let (w, h) = (region.width(), region.height());
    let n = grid.resolution();
    let (cw, ch) = (w / n as f64, h / n as f64);
    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\" width=\"800\" height=\"{}\">\n<title>{title}</title>\n",
        (800.0 * h / w).round()
    ));
    for row in 0..n {
        let y = h - (row + 1) as f64 * ch;
        let mut col = 0;
        while col < n {
            let owner = grid.get(row, col);
            let start = col;
            while col < n && grid.get(row, col) == owner {
                col += 1;
            }
            s.push_str(&format!(
                "<rect x=\"{}\" y=\"{y}\" width=\"{}\" height=\"{ch}\" fill=\"{}\"/>\n",
                start as f64 * cw,
                (col - start) as f64 * cw,
                station_color(owner)
            ));
        }
    }
    for b in overlays {
        match *b {
            ApolloniusBoundary::Circle { center, radius, .. } => s.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"{radius}\" fill=\"none\" stroke=\"#555\" stroke-width=\"1\" stroke-dasharray=\"4 3\"/>\n",
                center.x,
                h - center.y
            )),
            ApolloniusBoundary::Bisector { .. } => {
                let (a, c) = (b.point_at(-2.0 * (w + h)), b.point_at(2.0 * (w + h)));
                s.push_str(&format!(
                    "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#555\" stroke-dasharray=\"4 3\"/>\n",
                    a.x,
                    h - a.y,
                    c.x,
                    h - c.y
                ));
            }
        }
    }
    let arm = 0.004 * w.max(h);
    for u in &deployment.users {
        let (x, y) = (u.x, h - u.y);
        s.push_str(&format!(
            "<path d=\"M{} {}L{} {}M{} {}L{} {}\" stroke=\"#333\" stroke-width=\"0.8\"/>\n",
            x - arm,
            y - arm,
            x + arm,
            y + arm,
            x - arm,
            y + arm,
            x + arm,
            y - arm
        ));
    }
    for st in &deployment.stations {
        let r = match st.tier {
            Tier::Macro => 0.012 * w.max(h),
            Tier::Femto => 0.006 * w.max(h),
        };
        s.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"{r}\" fill=\"#000\"/>\n",
            st.position.x,
            h - st.position.y
        ));
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_text(path: &Path, text: &str) -> std::io::Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(text.as_bytes())?;
    f.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rasterize_coverage, Point2, WeightedSite};
    use ndarray::array;

    #[test]
    fn matrix_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_matrix(&p, &array![[0.5, 1.0], [0.25, 0.0]]).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert_eq!(text, "user,bs1,bs2\n1,0.5,1\n2,0.25,0\n");
    }

    #[test]
    fn svg_has_runs_and_sites() {
        let region = Region::square(10.0).unwrap();
        let sites = [
            WeightedSite::new(Point2::new(2.0, 5.0), 1.0).unwrap(),
            WeightedSite::new(Point2::new(8.0, 5.0), 1.0).unwrap(),
        ];
        let grid = rasterize_coverage(&sites, &region, 4).unwrap();
        let dep = Deployment::new(
            region,
            sites
                .iter()
                .map(|s| crate::deployment::Station { position: s.position, tier: Tier::Macro })
                .collect(),
            vec![Point2::new(1.0, 1.0)],
        );
        let svg = coverage_svg(&region, &grid, &dep, &[], "t");
        assert_eq!(svg.matches("<rect").count(), 8);
        assert_eq!(svg.matches("<circle").count(), 2);
        assert_eq!(svg.matches("<path").count(), 1);
    }
}
