use twopatch::adaptivity::{run_problem, RefineMode};
use twopatch::problems::Problem;
use twopatch::space::Smoothness;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let ex: u32 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1);
    let p: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(3);
    let mode = match args.get(3).map(|s| s.as_str()) {
        Some("uniform") => RefineMode::Uniform,
        Some("corner") => RefineMode::CornerBlock,
        _ => RefineMode::Adaptive,
    };
    let budget: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(2000);
    let problem = Problem::from_id(ex).unwrap();
    if args.len() > 5 && args[5] == "eig" {
        use twopatch::assembly::{assemble_poisson, ScalarData};
        use twopatch::hierarchy::HierarchicalSpace;
        let hier = HierarchicalSpace::new(
            problem.geometry(),
            p,
            p - 2,
            Smoothness::C1,
            problem.initial_elements(),
        )
        .unwrap();
        let f: ScalarData = &|_, _, _| 0.0;
        let g: ScalarData = &|_, _, _| 0.0;
        let sys = assemble_poisson(&hier, f, g);
        let a = sys.to_dense();
        let eig = a.symmetric_eigen();
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        println!(
            "ndof {}  min eig {:.6e}  next {:.6e}  max {:.6e}",
            sys.ndof,
            ev[0],
            ev[1],
            ev[ev.len() - 1]
        );
        return;
    }
    if args.len() > 5 {
        // refine-cost probe: corner-block refinement, timing each stage
        use twopatch::hierarchy::HierarchicalSpace;
        let mut hier = HierarchicalSpace::new(
            problem.geometry(),
            p,
            p - 2,
            Smoothness::C1,
            problem.initial_elements(),
        )
        .unwrap();
        for step in 0..budget {
            let marks = twopatch::adaptivity::corner_block_marks(&hier);
            let t = std::time::Instant::now();
            hier.refine_cells(&marks).unwrap();
            println!(
                "step {step}: refine {:.2}s  ndof {}  levels {}",
                t.elapsed().as_secs_f64(),
                hier.ndof(),
                hier.num_levels()
            );
        }
        return;
    }
    let t0 = std::time::Instant::now();
    let records = run_problem(
        problem,
        p,
        Smoothness::C1,
        mode,
        problem.default_theta(),
        budget,
        30,
    )
    .unwrap();
    let pick = |r: &twopatch::assembly::Norms| if ex == 4 { r.h2 } else { r.h1 };
    for r in &records {
        println!(
            "ndof {:5}  err {:.6e}  est {:.6e}  marked {:3}  {:.2}s",
            r.ndof,
            pick(&r.error),
            r.estimator,
            r.marked,
            r.seconds
        );
    }
    let n = records.len();
    for w in records.windows(2) {
        let rate = -(pick(&w[1].error) / pick(&w[0].error)).ln()
            / ((w[1].ndof as f64 / w[0].ndof as f64)).ln();
        print!("{rate:.3} ");
    }
    println!();
    // tail least-squares slope of log e vs log n
    let tail = &records[n.saturating_sub(5)..];
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for r in tail {
        let x = (r.ndof as f64).ln();
        let y = pick(&r.error).ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let m = tail.len() as f64;
    let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    println!("tail EOC {:.3}   total {:.1}s", -slope, t0.elapsed().as_secs_f64());
}
