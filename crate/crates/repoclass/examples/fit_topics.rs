//! Spherical topic models: sampling, estimation and mixture fitting.
//!
//! Draws two clouds of unit vectors from von Mises-Fisher distributions,
//! recovers direction and concentration for a single cloud, then fits a
//! two-component mixture by EM and prints its log-likelihood trace.
//!
//!     cargo run --example fit_topics

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use repoclass::topics::{
    estimate_kappa, fit_mixture, fit_vmf, mean_resultant, random_unit_vector, sample_vmf,
    VmfComponent,
};

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn main() -> anyhow::Result<()> {
    let dim = 8;
    let kappa = 30.0;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mu_a = random_unit_vector(dim, &mut rng);
    let mu_b = random_unit_vector(dim, &mut rng);

    let cloud = |mu: &Vec<f64>, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        let component = VmfComponent {
            mu: mu.clone(),
            kappa,
        };
        (0..400).map(|_| sample_vmf(&component, rng)).collect()
    };
    let cloud_a = cloud(&mu_a, &mut rng);
    let cloud_b = cloud(&mu_b, &mut rng);

    // Single-component estimation from one cloud.
    let fit = fit_vmf(&cloud_a)?;
    println!(
        "single vMF fit: kappa {kappa} -> {:.1}, direction cosine {:.4}",
        fit.kappa,
        cosine(&fit.mu, &mu_a)
    );

    // The concentration estimator works from one scalar: the resultant
    // length. Its theoretical value is what the sampler must reproduce.
    let mut mean = vec![0.0; dim];
    for x in &cloud_a {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v / cloud_a.len() as f64;
        }
    }
    let rbar = cosine(&mean, &mean).sqrt();
    println!(
        "resultant length {rbar:.4} (theory {:.4}) -> estimated kappa {:.1}",
        mean_resultant(dim, kappa),
        estimate_kappa(rbar, dim)
    );

    // Mixture fit from hard initial assignments.
    let mut points = cloud_a;
    points.extend(cloud_b);
    let assignments: Vec<usize> = (0..points.len()).map(|i| usize::from(i >= 400)).collect();
    let mixture = fit_mixture(&points, &assignments, vec!["a".into(), "b".into()])?;

    println!("\ntwo-component mixture:");
    for (component, (child, weight)) in mixture
        .components
        .iter()
        .zip(mixture.child_ids.iter().zip(&mixture.weights))
    {
        let truth = if child == "a" { &mu_a } else { &mu_b };
        println!(
            "  child {child}: weight {weight:.3}, kappa {:.1}, cosine to truth {:.4}",
            component.kappa,
            cosine(&component.mu, truth)
        );
    }
    let trace: Vec<String> = mixture.ll_trace.iter().map(|l| format!("{l:.1}")).collect();
    println!("  log-likelihood trace: {}", trace.join(" -> "));
    println!(
        "  mixture log-density at mu_a: {:.2}",
        mixture.log_density(&mu_a)
    );
    Ok(())
}
