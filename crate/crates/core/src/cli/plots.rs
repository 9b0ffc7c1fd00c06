//! gnuplot scripts over the CSV artifacts of a run.

use std::path::{Path, PathBuf};

use super::{write_atomic, Result, ScenarioError};

const HEADER: &str = "set datafile separator ','\nset key autotitle columnhead\nset terminal pngcairo size 1000,800\n";

struct Figure {
    script: &'static str,
    needs: &'static [&'static str],
    body: fn(&Path) -> String,
}

fn phase_portrait(dir: &Path) -> String {
    let mut s = String::from(
        "set output 'phase_portrait.png'\nset title 'separatrix, fundamental domain and lifted circles'\n\
         set size ratio -1\nplot 'separatrix.csv' using 1:2 with lines lw 2 title 'separatrix', \\\n  \
         'fundamental_domain.csv' using 1:2 with lines title 'fundamental domain'",
    );
    for c in circle_files(dir) {
        s.push_str(&format!(", \\\n  '{c}' using 1:2 with dots notitle"));
    }
    s.push('\n');
    s
}

fn strip_image(_: &Path) -> String {
    "set output 'strip_image.png'\nset title 'fiber band and its image under the rescaled return map'\n\
     set xlabel 'x'\nset ylabel 'ln y (ring)'\n\
     plot 'strip_image.csv' using 1:2 with points pt 7 ps 0.4 title 'band', \\\n  \
     '' using 3:4 with points pt 7 ps 0.4 title 'image'\n"
        .into()
}

fn graph_push(_: &Path) -> String {
    "set output 'graph_push.png'\nset title 'graph over J_M and its push'\nset xlabel 'x'\nset ylabel 'ln y'\n\
     plot 'push_input.csv' using 1:2 with lines title 'input graph', \\\n  \
     'push_output.csv' using 1:2 with lines title 'pushed graph'\n"
        .into()
}

fn witness(_: &Path) -> String {
    "set output 'witness.png'\nset title 'witness orbit'\nset xlabel 'return'\nset ylabel 'ln y'\n\
     plot 'witness.csv' using 1:3 with linespoints title 'ln y_n'\n"
        .into()
}

fn accumulation(_: &Path) -> String {
    "set output 'accumulation.png'\nset title 'distance of lifted circles to the separatrix'\n\
     set xlabel 'n'\nset ylabel 'Hausdorff distance'\nset logscale y\n\
     plot 'accumulation.csv' using 2:4 with linespoints title 'dist'\n"
        .into()
}

fn orbit(_: &Path) -> String {
    "set output 'orbit.png'\nset size ratio -1\nplot 'orbit.csv' using 2:3 with dots title 'orbit'\n".into()
}

const FIGURES: &[Figure] = &[
    Figure {
        script: "phase_portrait.gp",
        needs: &["separatrix.csv", "fundamental_domain.csv"],
        body: phase_portrait,
    },
    Figure {
        script: "strip_image.gp",
        needs: &["strip_image.csv"],
        body: strip_image,
    },
    Figure {
        script: "graph_push.gp",
        needs: &["push_input.csv", "push_output.csv"],
        body: graph_push,
    },
    Figure {
        script: "witness.gp",
        needs: &["witness.csv"],
        body: witness,
    },
    Figure {
        script: "accumulation.gp",
        needs: &["accumulation.csv"],
        body: accumulation,
    },
    Figure {
        script: "orbit.gp",
        needs: &["orbit.csv"],
        body: orbit,
    },
];

fn circle_files(dir: &Path) -> Vec<String> {
    let mut out: Vec<String> = std::fs::read_dir(dir)
        .map(|rd| {
            rd.filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .filter(|n| n.starts_with("circle_") && n.ends_with(".csv"))
                .collect()
        })
        .unwrap_or_default();
    out.sort();
    out
}

/// Writes one script per figure whose data files exist in `dir`. Fails
/// without writing anything when no figure has its data.
pub fn emit_plots(dir: &Path) -> Result<Vec<PathBuf>> {
    let ready: Vec<&Figure> = FIGURES
        .iter()
        .filter(|f| f.needs.iter().all(|n| dir.join(n).is_file()))
        .collect();
    if ready.is_empty() {
        return Err(ScenarioError::MissingArtifact(format!(
            "no plottable CSV artifacts in {}",
            dir.display()
        )));
    }
    ready
        .into_iter()
        .map(|f| write_atomic(dir, f.script, &format!("{HEADER}{}", (f.body)(dir))))
        .collect()
}
