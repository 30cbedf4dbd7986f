use std::path::Path;

use pairdeblur::config::{apply_pipeline_sections, load_scene, parse_sections};
use pairdeblur::detail::DetailParams;
use pairdeblur::flow::{
    compute_dense_flow, flow_error, flow_to_color, read_flo, write_flo, FlowParams,
};
use pairdeblur::image::{load_image, save_image, save_rgb_png, EnhanceParams};
use pairdeblur::metrics;
use pairdeblur::pipeline::{self, PipelineConfig};
use pairdeblur::synth::{add_gaussian_noise, apply_scene, preset_scene, BlurSceneSpec};
use pairdeblur::{Error, Result};

use crate::output::{atomic_write, atomic_write_text};
use crate::{DeblurArgs, FlowArgs, MetricsArgs, SynthArgs};

fn apply_flow_overrides(
    flow: &mut FlowParams,
    levels: Option<usize>,
    scale: Option<f64>,
    window: Option<usize>,
    iterations: Option<usize>,
    poly_n: Option<usize>,
    poly_sigma: Option<f64>,
) {
    if let Some(v) = levels {
        flow.pyramid_levels = v;
    }
    if let Some(v) = scale {
        flow.pyramid_scale = v;
    }
    if let Some(v) = window {
        flow.window_size = v;
    }
    if let Some(v) = iterations {
        flow.iterations_per_level = v;
    }
    if let Some(v) = poly_n {
        flow.poly_neighborhood = v;
    }
    if let Some(v) = poly_sigma {
        flow.poly_sigma = v;
    }
}

fn build_pipeline_config(args: &DeblurArgs) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound { path: path.clone() },
            _ => Error::Io {
                path: path.clone(),
                source: e,
            },
        })?;
        apply_pipeline_sections(&mut cfg, &parse_sections(&text)?)?;
    }

    if let Some(v) = args.iters {
        cfg.outer_iterations = v;
    }
    if let Some(v) = args.em_iters {
        cfg.gmm.em_iterations = v;
    }
    if let Some(v) = args.gd_iters {
        cfg.gmm.gd_iterations = v;
    }
    if let Some(v) = args.lambda {
        cfg.gmm.lambda = v;
    }
    if let Some(v) = args.omega {
        cfg.gmm.omega = v;
    }
    if let Some(v) = args.mu {
        cfg.gmm.mu = v;
    }
    if let Some(v) = args.alpha {
        cfg.gmm.alpha = v;
    }
    if let Some(v) = args.sigma_init {
        cfg.gmm.sigma_init = v;
    }
    if let Some(v) = args.sigma_d {
        cfg.gmm.sigma_d = v;
    }
    if let Some(v) = args.sigma_l {
        cfg.gmm.sigma_l = v;
    }
    if let Some(v) = args.s1 {
        cfg.patch.s1 = v;
    }
    if let Some(v) = args.s2 {
        cfg.patch.s2 = v;
    }
    if let Some(v) = args.stride {
        cfg.patch.stride = v;
    }
    if args.no_detail {
        cfg.detail = None;
    } else if args.detail {
        cfg.detail.get_or_insert_with(DetailParams::default);
    }
    // tau/eta tune an enabled detail stage; they do not re-enable it.
    if let Some(d) = cfg.detail.as_mut() {
        if let Some(v) = args.tau {
            d.tau = v;
        }
        if let Some(v) = args.eta {
            d.eta = v;
        }
    }
    if args.enhance_gain.is_some() || args.enhance_bias.is_some() || args.enhance_gamma.is_some() {
        let e = cfg.enhance.get_or_insert_with(EnhanceParams::default);
        if let Some(v) = args.enhance_gain {
            e.gain = v;
        }
        if let Some(v) = args.enhance_bias {
            e.bias = v;
        }
        if let Some(v) = args.enhance_gamma {
            e.gamma = v;
        }
    }
    apply_flow_overrides(
        &mut cfg.flow,
        args.flow_levels,
        args.flow_scale,
        args.flow_window,
        args.flow_iters,
        args.flow_poly_n,
        args.flow_poly_sigma,
    );
    if let Some(dir) = &args.dump_intermediate {
        cfg.diagnostics.dump_dir = Some(dir.clone());
    }
    if let Some(path) = &args.gt_flo {
        cfg.diagnostics.gt_flow = Some(read_flo(path)?);
    }
    Ok(cfg)
}

pub fn deblur(args: DeblurArgs) -> Result<()> {
    let cfg = build_pipeline_config(&args)?;
    cfg.validate()?;
    let blurred = load_image(&args.blurred)?;
    let noisy = load_image(&args.noisy)?;

    let run = || pipeline::deblur(&blurred, &noisy, &cfg);
    let (out, report) = match args.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidParam(format!("thread pool: {e}")))?;
            pool.install(run)?
        }
        None => run()?,
    };

    atomic_write(&args.out, |tmp| save_image(&out, tmp))?;
    if let Some(path) = &args.report {
        atomic_write_text(path, &report.to_text())?;
    }
    Ok(())
}

/// Kernel magnitudes in the built-in scenes depend on the image size, so
/// presets are instantiated per input; a path argument loads a scene file
/// instead.
fn resolve_scene(
    spec: &str,
    width: usize,
    height: usize,
    noise_sigma: f64,
) -> Result<BlurSceneSpec> {
    if let Ok(t) = spec.parse::<u8>() {
        return preset_scene(t, width, height, noise_sigma);
    }
    let path = Path::new(spec);
    if path.exists() {
        let mut scene = load_scene(path)?;
        scene.noise_sigma = noise_sigma;
        Ok(scene)
    } else {
        Err(Error::InvalidParam(format!(
            "--blur-type must be 1..6 or an existing scene file, got '{spec}'"
        )))
    }
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let sharp_a = load_image(&args.sharp_a)?;
    let sharp_b = load_image(&args.sharp_b)?;
    let scene = resolve_scene(
        &args.blur_type,
        sharp_a.width(),
        sharp_a.height(),
        args.noise_sigma,
    )?;
    let blurred = apply_scene(&sharp_a, &scene)?;
    let noisy = add_gaussian_noise(&sharp_b, scene.noise_sigma, args.seed)?;
    atomic_write(&args.out_blurred, |tmp| save_image(&blurred, tmp))?;
    atomic_write(&args.out_noisy, |tmp| save_image(&noisy, tmp))?;
    Ok(())
}

pub fn metrics(args: MetricsArgs) -> Result<()> {
    let reference = load_image(&args.reference)?;
    let test = load_image(&args.test)?;
    let report = metrics::report(&reference, &test)?;
    println!(
        "psnr={:.6} ssim={:.6} mse={:.6}",
        report.psnr, report.ssim, report.mse
    );
    Ok(())
}

pub fn flow(args: FlowArgs) -> Result<()> {
    let a = load_image(&args.a)?;
    let b = load_image(&args.b)?;
    let mut params = FlowParams::default();
    apply_flow_overrides(
        &mut params,
        args.flow_levels,
        args.flow_scale,
        args.flow_window,
        args.flow_iters,
        args.flow_poly_n,
        args.flow_poly_sigma,
    );
    let field = compute_dense_flow(&a, &b, &params)?;
    if let Some(path) = &args.out_flo {
        atomic_write(path, |tmp| write_flo(&field, tmp))?;
    }
    if let Some(path) = &args.out_viz {
        let rgb = flow_to_color(&field);
        atomic_write(path, |tmp| {
            save_rgb_png(field.width(), field.height(), &rgb, tmp)
        })?;
    }
    if let Some(path) = &args.gt_flo {
        let gt = read_flo(path)?;
        let (aee, aae) = flow_error(&field, &gt)?;
        println!("aee={aee:.6} aae={aae:.6}");
    }
    Ok(())
}
