use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sparsecafm::scanio::{denormalize, read_scan};
use sparsecafm::ScanField;

pub const COLORMAP: &str = "viridis";
const GAP: usize = 4;
const BACKGROUND: [u8; 3] = [255; 3];
const BAR_WIDTH: usize = 12;
const CHART_HEIGHT: usize = 200;

#[derive(clap::Args)]
pub struct Args {
    /// SCAF scans rendered side by side, or a single metrics CSV.
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// PNG file to write.
    #[arg(long)]
    out: PathBuf,
    /// CSV column plotted as bars.
    #[arg(long, default_value = "psnr_db")]
    column: String,
}

struct Image {
    width: usize,
    height: usize,
    rgb: Vec<u8>,
    text: Vec<(String, String)>,
}

impl Image {
    fn blank(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            rgb: BACKGROUND.repeat(width * height),
            text: vec![("colormap".into(), COLORMAP.into())],
        }
    }

    fn put(&mut self, x: usize, y: usize, c: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.rgb[i..i + 3].copy_from_slice(&c);
    }

    fn save(&self, path: &Path) -> Result<()> {
        crate::ensure_parent(path)?;
        let file = std::fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
        let mut enc = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        for (k, v) in &self.text {
            enc.add_text_chunk(k.clone(), v.clone())?;
        }
        let mut writer = enc.write_header()?;
        writer.write_image_data(&self.rgb)?;
        writer.finish()?;
        Ok(())
    }
}

fn viridis(t: f64) -> [u8; 3] {
    let c = colorous::VIRIDIS.eval_continuous(if t.is_finite() { t.clamp(0.0, 1.0) } else { 1.0 });
    [c.r, c.g, c.b]
}

pub fn run(args: Args) -> Result<()> {
    for p in &args.inputs {
        if !p.is_file() {
            bail!("input {} does not exist", p.display());
        }
    }
    let is_csv = |p: &PathBuf| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let image = match args.inputs.iter().filter(|p| is_csv(p)).count() {
        0 => panels(&args.inputs)?,
        1 if args.inputs.len() == 1 => bar_chart(&args.inputs[0], &args.column)?,
        _ => bail!("plot takes either SCAF scans or a single CSV"),
    };
    image.save(&args.out)?;
    log::info!("wrote {} ({}x{})", args.out.display(), image.width, image.height);
    Ok(())
}

/// Scans side by side on a shared colour scale, each stretched by nearest
/// neighbour to the tallest panel's height.
fn panels(paths: &[PathBuf]) -> Result<Image> {
    let fields: Vec<ScanField> = paths
        .iter()
        .map(|p| {
            let f = read_scan(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(if f.is_normalized() { denormalize(&f)? } else { f })
        })
        .collect::<Result<_>>()?;
    let height = fields.iter().map(|f| f.height()).max().unwrap_or(0);
    let widths: Vec<usize> = fields.iter().map(|f| (f.width() * height).div_ceil(f.height())).collect();
    let width = widths.iter().sum::<usize>() + GAP * (fields.len() - 1);
    let (lo, hi) = fields.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), f| {
        let (a, b) = f.min_max();
        (lo.min(a), hi.max(b))
    });
    let span = if hi > lo { (hi - lo) as f64 } else { 1.0 };

    let mut img = Image::blank(width, height);
    let mut x0 = 0;
    for (f, &w) in fields.iter().zip(&widths) {
        for y in 0..height {
            let sy = y * f.height() / height;
            for x in 0..w {
                let sx = (x * f.width() / w).min(f.width() - 1);
                img.put(x0 + x, y, viridis((f.get(sy, sx) - lo) as f64 / span));
            }
        }
        x0 += w + GAP;
    }
    let names: Vec<String> = paths
        .iter()
        .zip(&fields)
        .map(|(p, f)| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            format!("{name} [{}]", f.channel().name())
        })
        .collect();
    img.text.push(("panels".into(), names.join(" | ")));
    img.text.push(("value_range".into(), format!("{lo} {hi} {}", fields[0].units())));
    Ok(img)
}

/// One bar per row of `column`; infinite values fill the chart height.
fn bar_chart(path: &Path, column: &str) -> Result<Image> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let col = headers
        .iter()
        .position(|h| h == column)
        .with_context(|| format!("{} has no `{column}` column", path.display()))?;
    let mut values = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let v: f64 = record[col]
            .trim()
            .parse()
            .with_context(|| format!("`{}` in column `{column}` is not a number", &record[col]))?;
        values.push(v);
    }
    if values.is_empty() {
        bail!("{} has no rows", path.display());
    }
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let top = finite.iter().copied().fold(0.0f64, f64::max);
    let bottom = finite.iter().copied().fold(0.0f64, f64::min);
    let span = if top > bottom { top - bottom } else { 1.0 };
    let zero_row = ((top / span) * (CHART_HEIGHT - 1) as f64).round() as usize;

    let width = values.len() * (BAR_WIDTH + GAP) + GAP;
    let mut img = Image::blank(width, CHART_HEIGHT);
    for (i, &v) in values.iter().enumerate() {
        let row = |v: f64| ((top - v) / span * (CHART_HEIGHT - 1) as f64).round().clamp(0.0, (CHART_HEIGHT - 1) as f64) as usize;
        let end = match v {
            v if v == f64::INFINITY => 0,
            v if v == f64::NEG_INFINITY => CHART_HEIGHT - 1,
            v if v.is_nan() => zero_row,
            v => row(v),
        };
        let (y0, y1) = (end.min(zero_row), end.max(zero_row));
        let colour = viridis((v.min(top) - bottom) / span);
        let x0 = GAP + i * (BAR_WIDTH + GAP);
        for y in y0..=y1 {
            for x in x0..x0 + BAR_WIDTH {
                img.put(x, y, colour);
            }
        }
    }
    img.text.push(("column".into(), column.into()));
    img.text.push(("value_range".into(), format!("{bottom} {top}")));
    Ok(img)
}
