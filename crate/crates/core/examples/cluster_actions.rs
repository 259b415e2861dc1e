//! Clusters sentence vectors into an action set and projects the centroids
//! to 2-D with PCA.

use chatdqn::clustering::{fit_with_trace, pca_project, FitOptions};
use chatdqn::embeddings::embed_text;
use chatdqn::synth::{generate, SynthConfig};
use chatdqn::SeededRng;
use rand::SeedableRng;

fn main() -> chatdqn::Result<()> {
    let world = generate(&SynthConfig::default())?;
    let points: Vec<Vec<f64>> = world
        .train
        .dialogues()
        .iter()
        .flat_map(|d| d.texts().map(|t| embed_text(t, &world.table).values).collect::<Vec<_>>())
        .collect();
    let trace = fit_with_trace(&points, 16, &mut SeededRng::seed_from_u64(0), FitOptions::default())?;
    println!("sentences {}  k {}  iterations {}", points.len(), trace.model.k, trace.inertia_per_iter.len());
    println!("inertia first {:.3}  final {:.3}", trace.inertia_per_iter[0], trace.model.inertia);
    let xy = pca_project(&trace.model.centroids, 2)?;
    println!("action,x,y");
    for (i, p) in xy.iter().enumerate() {
        println!("{i},{:.4},{:.4}", p[0], p[1]);
    }
    Ok(())
}
