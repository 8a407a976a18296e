use std::fmt::Write as _;

use super::{raw_intervals, IntervalKind};
use crate::power::PowerModel;
use crate::schedule::Schedule;

const WIDTH: f64 = 800.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 20.0;
const LANE: f64 = 40.0;
const BOX: f64 = 28.0;

/// Fill for frequency index `i` of `m`: light for slow, dark for fast.
fn shade(i: usize, m: usize) -> String {
    let t = if m <= 1 { 1.0 } else { i as f64 / (m - 1) as f64 };
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp(198.0, 8.0),
        lerp(219.0, 69.0),
        lerp(239.0, 148.0)
    )
}

/// Render one period of `schedule` as an SVG Gantt chart.
///
/// Each task box is split into bands, one per frequency it uses, shaded from
/// light (slowest) to dark (fastest). Idle intervals are hatched; intervals
/// spent asleep carry a dashed outline and a `sleep` label. The wrap-around
/// interval is drawn at both ends of the lane.
pub fn gantt_svg(power: &PowerModel, schedule: &Schedule) -> String {
    let k = schedule.processors;
    let height = TOP * 2.0 + LANE * k as f64 + 20.0;
    let span = WIDTH - LEFT - RIGHT;
    let td = schedule.period;
    let x = |t: f64| LEFT + span * (t / td).clamp(0.0, 1.0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="monospace" font-size="11">"#
    );
    s.push_str(concat!(
        r#"<defs><pattern id="hatch" width="6" height="6" patternUnits="userSpaceOnUse" patternTransform="rotate(45)">"#,
        r##"<line x1="0" y1="0" x2="0" y2="6" stroke="#999" stroke-width="1.5"/></pattern></defs>"##,
        "\n"
    ));
    for p in 0..k {
        let y = TOP + LANE * p as f64;
        let _ = writeln!(
            s,
            r##"<rect x="{LEFT}" y="{y}" width="{span}" height="{LANE}" fill="none" stroke="#ccc"/><text x="8" y="{:.1}">P{}</text>"##,
            y + LANE / 2.0 + 4.0,
            p + 1
        );
    }
    let lanes = schedule.lanes();
    let m = power.num_freqs();
    for lane in &lanes {
        for &i in lane {
            let t = &schedule.tasks[i];
            let y = TOP + LANE * t.processor as f64 + (LANE - BOX) / 2.0;
            let mut split = t.split.clone();
            split.sort_by_key(|&(f, _)| f);
            let mut cursor = t.start;
            for (f, cycles) in split {
                let d = cycles / power.freqs[f];
                if d <= 0.0 {
                    continue;
                }
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.3}" y="{y:.3}" width="{:.3}" height="{BOX}" fill="{}"><title>task {} f{} {} cycles</title></rect>"#,
                    x(cursor),
                    x(cursor + d) - x(cursor),
                    shade(f, m),
                    t.id,
                    f + 1,
                    cycles
                );
                cursor += d;
            }
            let (x0, x1) = (x(t.start), x(cursor));
            let _ = writeln!(
                s,
                r##"<rect x="{x0:.3}" y="{y:.3}" width="{:.3}" height="{BOX}" fill="none" stroke="#000"/><text x="{:.3}" y="{:.3}" text-anchor="middle" fill="#fff">{}</text>"##,
                x1 - x0,
                (x0 + x1) / 2.0,
                y + BOX / 2.0 + 4.0,
                t.id
            );
        }
    }
    for iv in raw_intervals(power, schedule) {
        if iv.kind == IntervalKind::WholePeriod {
            continue;
        }
        let lane = &lanes[iv.processor];
        let pieces: Vec<(f64, f64)> = match iv.kind {
            IntervalKind::WrapAround => {
                let first = schedule.tasks[lane[0]].start;
                let last = schedule.tasks[lane[lane.len() - 1]].finish(power);
                [(last, td), (0.0, first)]
                    .into_iter()
                    .filter(|(a, b)| b - a > 0.0)
                    .collect()
            }
            _ => {
                let next = schedule.tasks[lane[iv.index]].start;
                vec![(next - iv.length, next)]
            }
        };
        let y = TOP + LANE * iv.processor as f64 + (LANE - BOX) / 2.0;
        let stroke = if iv.switched {
            r##" stroke="#c00" stroke-dasharray="4 2""##
        } else {
            ""
        };
        for (a, b) in pieces {
            let _ = writeln!(
                s,
                r#"<rect x="{:.3}" y="{y:.3}" width="{:.3}" height="{BOX}" fill="url(#hatch)"{stroke}/>"#,
                x(a),
                x(b) - x(a)
            );
            if iv.switched {
                let _ = writeln!(
                    s,
                    r##"<text x="{:.3}" y="{:.3}" text-anchor="middle" fill="#c00">sleep</text>"##,
                    (x(a) + x(b)) / 2.0,
                    y - 2.0
                );
            }
        }
    }
    let axis_y = TOP + LANE * k as f64 + 14.0;
    let _ = writeln!(
        s,
        r#"<text x="{LEFT}" y="{axis_y}">0</text><text x="{:.3}" y="{axis_y}" text-anchor="end">{} ms</text>"#,
        WIDTH - RIGHT,
        td * 1e3
    );
    s.push_str("</svg>\n");
    s
}
