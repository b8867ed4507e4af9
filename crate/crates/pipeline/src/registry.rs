//! Backend descriptors and the factories that turn them into stage objects.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use crate::backend::{BackendSet, Classifier, Detector, Exclusive, Segmenter, Stage};
use crate::config::ConfigError;
use crate::mock::{ConstantClassifier, MockClassifier, MockDetector, MockSegmenter};
use crate::remote::{HttpChannel, RemoteBackend, StdioChannel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Transport {
    InProcessMock,
    ChildProcessStdio,
    Http,
}

impl Transport {
    pub const ALL: [Transport; 3] = [Transport::InProcessMock, Transport::ChildProcessStdio, Transport::Http];

    pub fn name(self) -> &'static str {
        match self {
            Transport::InProcessMock => "in-process-mock",
            Transport::ChildProcessStdio => "child-process-stdio",
            Transport::Http => "http",
        }
    }
}

impl fmt::Display for Transport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Transport {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Transport::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| ConfigError::Transport(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendDescriptor {
    pub kind: Stage,
    pub transport: Transport,
    /// Command line for stdio, URL for HTTP, variant for mocks.
    pub endpoint: String,
    /// Whether requests to this backend may interleave.
    pub parallel_safe: bool,
}

impl BackendDescriptor {
    pub fn mock(kind: Stage) -> Self {
        Self {
            kind,
            transport: Transport::InProcessMock,
            endpoint: String::new(),
            parallel_safe: true,
        }
    }

    /// Parses `mock[:variant]`, `stdio:<command>` or an `http(s)://` URL.
    pub fn parse(kind: Stage, spec: &str) -> Result<Self, ConfigError> {
        let spec = spec.trim();
        let (transport, endpoint, parallel_safe) = if spec == "mock" {
            (Transport::InProcessMock, "", true)
        } else if let Some(rest) = spec.strip_prefix("mock:") {
            (Transport::InProcessMock, rest, true)
        } else if let Some(rest) = spec.strip_prefix("stdio:") {
            (Transport::ChildProcessStdio, rest.trim(), false)
        } else if spec.starts_with("http://") || spec.starts_with("https://") {
            (Transport::Http, spec, true)
        } else {
            return Err(ConfigError::Transport(spec.to_string()));
        };
        let d = Self {
            kind,
            transport,
            endpoint: endpoint.to_string(),
            parallel_safe,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.transport != Transport::InProcessMock && self.endpoint.trim().is_empty() {
            return Err(ConfigError::MissingEndpoint(self.transport.to_string()));
        }
        Ok(())
    }
}

/// Inputs shared by every factory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildContext {
    pub seed: u64,
    pub http_timeout: Duration,
}

impl Default for BuildContext {
    fn default() -> Self {
        Self {
            seed: 0,
            http_timeout: Duration::from_secs(60),
        }
    }
}

pub trait BackendFactory: Send + Sync {
    fn detector(&self, d: &BackendDescriptor, ctx: &BuildContext) -> Result<Arc<dyn Detector>, ConfigError>;
    fn segmenter(&self, d: &BackendDescriptor, ctx: &BuildContext) -> Result<Arc<dyn Segmenter>, ConfigError>;
    fn classifier(&self, d: &BackendDescriptor, ctx: &BuildContext) -> Result<Arc<dyn Classifier>, ConfigError>;
}

fn unknown_variant(d: &BackendDescriptor) -> ConfigError {
    ConfigError::Transport(format!("mock:{} (for {})", d.endpoint, d.kind))
}

/// In-process mocks. The classifier also accepts `constant:<genus>`.
pub struct MockFactory;

impl BackendFactory for MockFactory {
    fn detector(&self, d: &BackendDescriptor, ctx: &BuildContext) -> Result<Arc<dyn Detector>, ConfigError> {
        match d.endpoint.as_str() {
            "" => Ok(Arc::new(MockDetector::seeded(ctx.seed))),
            _ => Err(unknown_variant(d)),
        }
    }

    fn segmenter(&self, d: &BackendDescriptor, ctx: &BuildContext) -> Result<Arc<dyn Segmenter>, ConfigError> {
        match d.endpoint.as_str() {
            "" => Ok(Arc::new(MockSegmenter { seed: ctx.seed })),
            _ => Err(unknown_variant(d)),
        }
    }

    fn classifier(&self, d: &BackendDescriptor, ctx: &BuildContext) -> Result<Arc<dyn Classifier>, ConfigError> {
        match d.endpoint.split_once(':') {
            None if d.endpoint.is_empty() => Ok(Arc::new(MockClassifier::new(ctx.seed))),
            Some(("constant", genus)) if !genus.is_empty() => Ok(Arc::new(ConstantClassifier {
                genus: genus.to_string(),
                confidence: 1.0,
            })),
            _ => Err(unknown_variant(d)),
        }
    }
}

pub struct StdioFactory;

impl StdioFactory {
    fn channel(d: &BackendDescriptor) -> Result<RemoteBackend<StdioChannel>, ConfigError> {
        let ch = StdioChannel::new(&d.endpoint).map_err(|_| ConfigError::MissingEndpoint(d.endpoint.clone()))?;
        Ok(RemoteBackend::new(ch, d.kind))
    }
}

impl BackendFactory for StdioFactory {
    fn detector(&self, d: &BackendDescriptor, _: &BuildContext) -> Result<Arc<dyn Detector>, ConfigError> {
        Ok(Arc::new(Self::channel(d)?))
    }

    fn segmenter(&self, d: &BackendDescriptor, _: &BuildContext) -> Result<Arc<dyn Segmenter>, ConfigError> {
        Ok(Arc::new(Self::channel(d)?))
    }

    fn classifier(&self, d: &BackendDescriptor, _: &BuildContext) -> Result<Arc<dyn Classifier>, ConfigError> {
        Ok(Arc::new(Self::channel(d)?))
    }
}

pub struct HttpFactory;

impl BackendFactory for HttpFactory {
    fn detector(&self, d: &BackendDescriptor, ctx: &BuildContext) -> Result<Arc<dyn Detector>, ConfigError> {
        Ok(Arc::new(RemoteBackend::new(HttpChannel::new(&d.endpoint, ctx.http_timeout), d.kind)))
    }

    fn segmenter(&self, d: &BackendDescriptor, ctx: &BuildContext) -> Result<Arc<dyn Segmenter>, ConfigError> {
        Ok(Arc::new(RemoteBackend::new(HttpChannel::new(&d.endpoint, ctx.http_timeout), d.kind)))
    }

    fn classifier(&self, d: &BackendDescriptor, ctx: &BuildContext) -> Result<Arc<dyn Classifier>, ConfigError> {
        Ok(Arc::new(RemoteBackend::new(HttpChannel::new(&d.endpoint, ctx.http_timeout), d.kind)))
    }
}

/// Factories keyed by transport name.
pub struct BackendRegistry {
    factories: BTreeMap<&'static str, Box<dyn BackendFactory>>,
}

impl Default for BackendRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register(Transport::InProcessMock, Box::new(MockFactory));
        r.register(Transport::ChildProcessStdio, Box::new(StdioFactory));
        r.register(Transport::Http, Box::new(HttpFactory));
        r
    }
}

impl BackendRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    /// Installs `factory` for `transport`, returning the one it replaces.
    pub fn register(
        &mut self,
        transport: Transport,
        factory: Box<dyn BackendFactory>,
    ) -> Option<Box<dyn BackendFactory>> {
        self.factories.insert(transport.name(), factory)
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    fn factory(&self, d: &BackendDescriptor, stage: Stage) -> Result<&dyn BackendFactory, ConfigError> {
        if d.kind != stage {
            return Err(ConfigError::KindMismatch {
                expected: stage.to_string(),
                got: d.kind.to_string(),
            });
        }
        d.validate()?;
        self.factories
            .get(d.transport.name())
            .map(|f| f.as_ref())
            .ok_or_else(|| ConfigError::Unregistered(d.transport.to_string()))
    }

    /// Builds one backend per stage; non-parallel-safe ones are wrapped so
    /// they see one request at a time.
    pub fn build(
        &self,
        detector: &BackendDescriptor,
        segmenter: &BackendDescriptor,
        classifier: &BackendDescriptor,
        ctx: &BuildContext,
    ) -> Result<BackendSet, ConfigError> {
        let mut det = self.factory(detector, Stage::Detect)?.detector(detector, ctx)?;
        let mut seg = self.factory(segmenter, Stage::Segment)?.segmenter(segmenter, ctx)?;
        let mut cls = self.factory(classifier, Stage::Classify)?.classifier(classifier, ctx)?;
        if !detector.parallel_safe {
            det = Arc::new(Exclusive::new(det));
        }
        if !segmenter.parallel_safe {
            seg = Arc::new(Exclusive::new(seg));
        }
        if !classifier.parallel_safe {
            cls = Arc::new(Exclusive::new(cls));
        }
        Ok(BackendSet {
            detector: det,
            segmenter: seg,
            classifier: cls,
        })
    }
}
