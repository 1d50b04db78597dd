//! Per-document pipeline: probe set, interrogation, resolution, tally and
//! fusion, plus the parallel driver shared by evaluation and verification.

use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::Config;
use super::HarnessError;
use crate::domain::{invert_verdict, Claim, Document, Polarity, Verdict};
use crate::fusion::{
    fuse_all, tally, AlphaOverrides, FusionError, FusionOutcome, FusionParams, MetaOutcome, ResponseDistribution,
};
use crate::gateway::{
    interrogate, sample, Backend, BackendInfo, GatewayError, ProbeResponses, TranscriptRecord, TranscriptWriter,
};
use crate::probegen::{build_probe_set, InteractionMode, ProbeTemplate, RenderOptions};
use crate::resolver::Resolver;

/// Which probe groups feed the fusion stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ablation {
    #[default]
    All,
    /// Agree probes only.
    Ag,
    /// Conflict probes only.
    Cf,
}

impl Ablation {
    /// Pins every strategy's alpha so that only the kept group contributes.
    pub fn effective_params(self, params: &FusionParams) -> FusionParams {
        let pinned = |wp: f64, wbu: f64| FusionParams {
            alpha: params.alpha,
            overrides: AlphaOverrides {
                wp: Some(wp),
                wig: Some(wp),
                wbu: Some(wbu),
            },
            samples_per_probe: params.samples_per_probe,
        };
        match self {
            Ablation::All => *params,
            Ablation::Ag => pinned(1.0, 0.0),
            Ablation::Cf => pinned(0.0, 1.0),
        }
    }

    fn keeps(self, polarity: Polarity) -> bool {
        match self {
            Ablation::All => true,
            Ablation::Ag => polarity == Polarity::Agree,
            Ablation::Cf => polarity == Polarity::Conflict,
        }
    }
}

impl FromStr for Ablation {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "all" => Ok(Ablation::All),
            "ag" | "agree" => Ok(Ablation::Ag),
            "cf" | "conflict" => Ok(Ablation::Cf),
            other => Err(HarnessError::Config(format!("unknown ablation `{other}` (expected ag, cf or all)"))),
        }
    }
}

/// Identifies one run in transcripts and reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunContext {
    pub run_id: String,
    pub timestamp: String,
}

impl RunContext {
    pub fn new(run_id: impl Into<String>, timestamp: impl Into<String>) -> Self {
        RunContext {
            run_id: run_id.into(),
            timestamp: timestamp.into(),
        }
    }
}

/// Settings that produced a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub run_id: String,
    pub timestamp: String,
    pub backend: BackendInfo,
    pub mode: InteractionMode,
    pub k_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub rag_baseline: String,
}

pub const RAG_BASELINE_NOTE: &str = "first sample of the original agree probe, resolved without fusion";

/// Raw interrogation output for one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentTranscript {
    pub claim_id: String,
    pub doc_id: String,
    pub ablation: Ablation,
    pub probes: Vec<ProbeResponses>,
}

/// Everything fusion needs for one document; cheap to re-fuse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentTally {
    pub claim_id: String,
    pub doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Verdict>,
    pub d_ag: ResponseDistribution,
    pub d_cf: ResponseDistribution,
    pub rag_baseline: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaVerdict {
    pub verdict: Verdict,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentResult {
    pub doc_id: String,
    pub claim_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Verdict>,
    pub d_ag: ResponseDistribution,
    pub d_cf: ResponseDistribution,
    pub wp: FusionOutcome,
    pub wig: FusionOutcome,
    pub wbu: FusionOutcome,
    pub meta: MetaVerdict,
    pub rag_baseline: Verdict,
}

impl DocumentResult {
    pub fn from_tally(tally: &DocumentTally, params: &FusionParams) -> Self {
        let MetaOutcome {
            verdict,
            confidence,
            wp,
            wig,
            wbu,
        } = fuse_all(&tally.d_ag, &tally.d_cf, params);
        DocumentResult {
            doc_id: tally.doc_id.clone(),
            claim_id: tally.claim_id.clone(),
            label: tally.label,
            d_ag: tally.d_ag,
            d_cf: tally.d_cf,
            wp,
            wig,
            wbu,
            meta: MetaVerdict { verdict, confidence },
            rag_baseline: tally.rag_baseline,
        }
    }
}

pub struct Pipeline {
    backend: Arc<dyn Backend>,
    templates: Vec<ProbeTemplate>,
    mode: InteractionMode,
    render: RenderOptions,
    resolver: Resolver,
    params: FusionParams,
    parallelism: usize,
    transcript_path: Option<PathBuf>,
    context: RunContext,
}

impl Pipeline {
    pub fn new(backend: Arc<dyn Backend>, templates: Vec<ProbeTemplate>, mode: InteractionMode, resolver: Resolver) -> Self {
        Pipeline {
            backend,
            templates,
            mode,
            render: RenderOptions::default(),
            resolver,
            params: FusionParams::default(),
            parallelism: 1,
            transcript_path: None,
            context: RunContext::new("run", ""),
        }
    }

    pub fn from_config(config: &Config, backend: Arc<dyn Backend>, context: RunContext) -> Result<Self, HarnessError> {
        config.validate()?;
        let mut pipeline = Pipeline::new(backend, config.templates()?, config.probes.mode, config.resolver()?)
            .with_params(config.fusion_params())
            .with_render_options(config.render_options())
            .with_parallelism(config.run.parallelism)
            .with_context(context);
        pipeline.transcript_path = config.run.transcript_path.clone();
        Ok(pipeline)
    }

    pub fn with_params(mut self, params: FusionParams) -> Self {
        self.params = params;
        self
    }

    pub fn with_render_options(mut self, render: RenderOptions) -> Self {
        self.render = render;
        self
    }

    pub fn with_parallelism(mut self, parallelism: usize) -> Self {
        self.parallelism = parallelism.max(1);
        self
    }

    pub fn with_transcript(mut self, path: Option<PathBuf>) -> Self {
        self.transcript_path = path;
        self
    }

    pub fn with_context(mut self, context: RunContext) -> Self {
        self.context = context;
        self
    }

    pub fn params(&self) -> &FusionParams {
        &self.params
    }

    pub fn context(&self) -> &RunContext {
        &self.context
    }

    pub fn metadata(&self) -> RunMetadata {
        let backend = self.backend.info();
        RunMetadata {
            run_id: self.context.run_id.clone(),
            timestamp: self.context.timestamp.clone(),
            seed: backend.seed,
            backend,
            mode: self.mode,
            k_samples: self.params.samples_per_probe,
            rag_baseline: RAG_BASELINE_NOTE.to_string(),
        }
    }

    /// Samples the probes the ablation keeps. The original agree probe is
    /// always sampled at least once because the baseline needs it.
    pub fn interrogate_document(
        &self,
        claim: &Claim,
        doc: &Document,
        ablation: Ablation,
    ) -> Result<DocumentTranscript, HarnessError> {
        let mut set = build_probe_set(claim, doc, &self.templates, self.mode, &self.render)?;
        let k = self.params.samples_per_probe;
        let original = set.original().clone();
        let mut baseline_only = None;
        match ablation {
            Ablation::All => {}
            Ablation::Ag => set.conflict_probes.clear(),
            Ablation::Cf => {
                set.agree_probes.clear();
                baseline_only = Some(original);
            }
        }
        let mut probes = Vec::with_capacity(set.len() + 1);
        if let Some(probe) = baseline_only {
            let responses = sample(self.backend.as_ref(), &claim.id, &doc.id, &probe, 1).map_err(|e| {
                GatewayError::Probe {
                    probe_id: probe.id.clone(),
                    source: Box::new(e),
                }
            })?;
            probes.push(ProbeResponses {
                probe_id: probe.id,
                polarity: probe.polarity,
                is_paraphrase: probe.is_paraphrase,
                prompt: probe.prompt,
                responses,
            });
        }
        probes.extend(interrogate(self.backend.as_ref(), &set, k)?);
        Ok(DocumentTranscript {
            claim_id: claim.id.clone(),
            doc_id: doc.id.clone(),
            ablation,
            probes,
        })
    }

    /// Resolves every response and pools them by polarity. A group the
    /// ablation drops is replaced by the unobserved distribution.
    pub fn tally_document(&self, transcript: &DocumentTranscript, label: Option<Verdict>) -> Result<DocumentTally, HarnessError> {
        let ablation = transcript.ablation;
        let baseline = transcript
            .probes
            .iter()
            .find(|p| p.polarity == Polarity::Agree && !p.is_paraphrase)
            .and_then(|p| p.responses.first())
            .ok_or(FusionError::EmptyPolarityGroup(Polarity::Agree))?;
        let rag_baseline = self.resolver.resolve(baseline, self.mode);

        let resolved: Vec<(Verdict, Polarity)> = transcript
            .probes
            .iter()
            .filter(|p| ablation.keeps(p.polarity))
            .flat_map(|p| p.responses.iter().map(move |r| (self.resolver.resolve(r, self.mode), p.polarity)))
            .collect();
        let (d_ag, d_cf) = match ablation {
            Ablation::All => tally(resolved)?,
            Ablation::Ag => (group_distribution(&resolved, Polarity::Agree)?, ResponseDistribution::unobserved()),
            Ablation::Cf => (ResponseDistribution::unobserved(), group_distribution(&resolved, Polarity::Conflict)?),
        };
        Ok(DocumentTally {
            claim_id: transcript.claim_id.clone(),
            doc_id: transcript.doc_id.clone(),
            label,
            d_ag,
            d_cf,
            rag_baseline,
        })
    }

    pub fn fuse(&self, tally: &DocumentTally, ablation: Ablation) -> DocumentResult {
        DocumentResult::from_tally(tally, &ablation.effective_params(&self.params))
    }

    /// Interrogates and tallies every pair on a pool of `parallelism`
    /// threads. Output follows input order; the transcript (if configured)
    /// receives every successful document in that order, and the first
    /// failure in input order is returned.
    pub fn analyze_many(&self, items: &[(Claim, Document)], ablation: Ablation) -> Result<Vec<DocumentTally>, HarnessError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.parallelism)
            .build()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
        let outcomes: Vec<Result<(DocumentTranscript, DocumentTally), HarnessError>> = pool.install(|| {
            items
                .par_iter()
                .map(|(claim, doc)| {
                    let transcript = self.interrogate_document(claim, doc, ablation)?;
                    let tally = self.tally_document(&transcript, doc.label)?;
                    Ok((transcript, tally))
                })
                .collect()
        });

        if let Some(path) = &self.transcript_path {
            let writer = TranscriptWriter::open(path)?;
            for (transcript, _) in outcomes.iter().flatten() {
                writer.append(&TranscriptRecord::from_interrogation(
                    &self.context.run_id,
                    &transcript.claim_id,
                    &transcript.doc_id,
                    &transcript.probes,
                    &self.context.timestamp,
                ))?;
            }
        }

        outcomes
            .into_iter()
            .zip(items)
            .map(|(outcome, (_, doc))| {
                outcome.map(|(_, tally)| tally).map_err(|e| HarnessError::Document {
                    doc_id: doc.id.clone(),
                    source: Box::new(e),
                })
            })
            .collect()
    }
}

fn group_distribution(resolved: &[(Verdict, Polarity)], polarity: Polarity) -> Result<ResponseDistribution, HarnessError> {
    let mut counts = [0usize; 3];
    for &(verdict, p) in resolved.iter().filter(|(_, p)| *p == polarity) {
        let v = match p {
            Polarity::Agree => verdict,
            Polarity::Conflict => invert_verdict(verdict),
        };
        counts[v.index()] += 1;
    }
    Ok(ResponseDistribution::from_counts(counts).ok_or(FusionError::EmptyPolarityGroup(polarity))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{MockBackend, MockScript};
    use crate::probegen::default_templates;
    use crate::resolver::ResolutionRules;

    fn pipeline(script: MockScript) -> Pipeline {
        Pipeline::new(
            Arc::new(MockBackend::new(script).unwrap()),
            default_templates(InteractionMode::QuestionAnswer),
            InteractionMode::QuestionAnswer,
            Resolver::new(&ResolutionRules::default()).unwrap(),
        )
    }

    fn pair(label: Verdict) -> (Claim, Document) {
        (
            Claim::new("c", "Human activities may cause climate change").unwrap(),
            Document::new("d", "An abstract.").unwrap().with_label(label),
        )
    }

    #[test]
    fn clean_answers_give_one_hot_tallies() {
        for label in Verdict::ALL {
            let p = pipeline(MockScript::noisy([("d", label)], 1.0, 1));
            let (claim, doc) = pair(label);
            let t = p.analyze_many(&[(claim, doc)], Ablation::All).unwrap().remove(0);
            assert_eq!(t.d_ag.get(label), 1.0);
            assert_eq!(t.d_cf.get(label), 1.0);
            assert_eq!(t.d_ag.n, 20);
            assert_eq!(t.rag_baseline, label);
            let r = p.fuse(&t, Ablation::All);
            assert_eq!(r.meta.verdict, label);
        }
    }

    #[test]
    fn ablations_drop_a_group() {
        let p = pipeline(MockScript::adversarial([("d", Verdict::Support)], 1));
        let (claim, doc) = pair(Verdict::Support);
        let ag = p.interrogate_document(&claim, &doc, Ablation::Ag).unwrap();
        assert!(ag.probes.iter().all(|r| r.polarity == Polarity::Agree));
        let t = p.tally_document(&ag, None).unwrap();
        assert_eq!(t.d_cf, ResponseDistribution::unobserved());
        assert_eq!(p.fuse(&t, Ablation::Ag).meta.verdict, Verdict::Support);

        let cf = p.interrogate_document(&claim, &doc, Ablation::Cf).unwrap();
        assert_eq!(cf.probes[0].responses.len(), 1);
        let t = p.tally_document(&cf, None).unwrap();
        assert_eq!(t.d_ag, ResponseDistribution::unobserved());
        assert_eq!(t.d_cf.n, 20);
        assert_eq!(t.rag_baseline, Verdict::Support);
        assert_eq!(p.fuse(&t, Ablation::Cf).meta.verdict, Verdict::Refute);
    }

    #[test]
    fn missing_script_entries_name_the_document() {
        let mut script = MockScript::noisy([("d", Verdict::Support)], 1.0, 1);
        script.entries.retain(|e| e.polarity == Polarity::Conflict);
        let p = pipeline(script);
        let err = p.analyze_many(&[pair(Verdict::Support)], Ablation::Ag).unwrap_err();
        assert!(matches!(err, HarnessError::Document { ref doc_id, .. } if doc_id == "d"));
        match err.root() {
            HarnessError::Gateway(g) => assert!(matches!(g.root(), GatewayError::ScriptMiss { .. })),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ablation_names_parse() {
        assert_eq!("AG".parse::<Ablation>().unwrap(), Ablation::Ag);
        assert_eq!("cf".parse::<Ablation>().unwrap(), Ablation::Cf);
        assert!("both".parse::<Ablation>().is_err());
    }
}
